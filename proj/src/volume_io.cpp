#include "despeckle/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace despeckle {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void malformed(const fs::path& path, const std::string& what) {
  throw IoError("malformed header: " + what + " (" + path.string() + ")");
}

template <typename T>
std::vector<T> parse_list(const fs::path& path, const std::string& key,
                          const std::string& value, std::size_t expected) {
  std::istringstream in(value);
  std::vector<T> out;
  T x{};
  while (in >> x) {
    out.push_back(x);
  }
  if (!in.eof() || out.size() != expected) {
    malformed(path, key + " needs " + std::to_string(expected) + " values");
  }
  return out;
}

std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) |
           (x >> 24);
  }
  return x;
}

}  // namespace

Volume3D load_volume(const fs::path& header_path) {
  std::ifstream header(header_path);
  if (!header) {
    throw IoError("cannot open " + header_path.string());
  }

  std::map<std::string, std::string> fields;
  std::string line;
  while (std::getline(header, line)) {
    if (trim(line).empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      malformed(header_path, "line without '=': " + trim(line));
    }
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  auto require = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) {
      malformed(header_path, "missing " + key);
    }
    return it->second;
  };

  const auto ndims = parse_list<int>(header_path, "NDims", require("NDims"), 1);
  if (ndims[0] != 3) {
    malformed(header_path, "NDims must be 3");
  }

  const auto dim_size =
      parse_list<long long>(header_path, "DimSize", require("DimSize"), 3);
  if (std::any_of(dim_size.begin(), dim_size.end(),
                  [](long long n) { return n <= 0; })) {
    malformed(header_path, "DimSize entries must be positive");
  }
  const Dims dims{static_cast<std::size_t>(dim_size[0]),
                  static_cast<std::size_t>(dim_size[1]),
                  static_cast<std::size_t>(dim_size[2])};

  Spacing spacing;
  if (const auto it = fields.find("ElementSpacing"); it != fields.end()) {
    const auto s = parse_list<double>(header_path, "ElementSpacing", it->second, 3);
    if (std::any_of(s.begin(), s.end(),
                    [](double x) { return !(x > 0.0) || !std::isfinite(x); })) {
      malformed(header_path, "ElementSpacing entries must be positive");
    }
    spacing = {s[0], s[1], s[2]};
  }

  const std::string& type = require("ElementType");
  std::size_t element_bytes = 0;
  if (type == "MET_FLOAT") {
    element_bytes = 4;
  } else if (type == "MET_UCHAR") {
    element_bytes = 1;
  } else {
    throw IoError("unsupported element type " + type + " (" +
                  header_path.string() + ")");
  }

  const std::string& data_file = require("ElementDataFile");
  if (data_file.empty() || data_file == "LOCAL" || data_file == "LIST") {
    malformed(header_path, "ElementDataFile must name a raw payload file");
  }
  const fs::path payload_path = header_path.parent_path() / data_file;

  std::ifstream payload(payload_path, std::ios::binary);
  if (!payload) {
    throw IoError("cannot open payload " + payload_path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(payload)),
                          std::istreambuf_iterator<char>());
  const std::size_t n = dims.voxel_count();
  if (bytes.size() != n * element_bytes) {
    throw IoError("payload size mismatch: expected " +
                  std::to_string(n * element_bytes) + " bytes, found " +
                  std::to_string(bytes.size()) + " (" + payload_path.string() + ")");
  }

  std::vector<double> data(n);
  if (element_bytes == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = static_cast<unsigned char>(bytes[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + 4 * i, 4);
      const float f = std::bit_cast<float>(to_little_endian(bits));
      if (!std::isfinite(f)) {
        throw IoError("non-finite intensity in payload " + payload_path.string());
      }
      data[i] = f;
    }
  }
  return Volume3D(dims, std::move(data), spacing);
}

void save_volume(const Volume3D& v, const fs::path& header_path) {
  fs::path raw_path = header_path;
  raw_path.replace_extension(".raw");

  std::vector<char> bytes(4 * v.size());
  const auto data = v.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint32_t bits =
        to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
    std::memcpy(bytes.data() + 4 * i, &bits, 4);
  }
  {
    std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw IoError("cannot write " + raw_path.string());
    }
  }

  std::ofstream out(header_path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + header_path.string());
  }
  const Dims& d = v.dims();
  const Spacing& s = v.spacing();
  out.precision(17);
  out << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "BinaryData = True\n"
      << "BinaryDataByteOrderMSB = False\n"
      << "DimSize = " << d.nx << ' ' << d.ny << ' ' << d.nz << '\n'
      << "ElementSpacing = " << s.sx << ' ' << s.sy << ' ' << s.sz << '\n'
      << "ElementType = MET_FLOAT\n"
      << "ElementDataFile = " << raw_path.filename().string() << '\n';
  if (!out) {
    throw IoError("cannot write " + header_path.string());
  }
}

}  // namespace despeckle
