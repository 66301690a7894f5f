#pragma once

#include <filesystem>

#include "despeckle/volume.hpp"

namespace despeckle {

/// Reads a MetaImage (.mhd) header plus its raw little-endian payload.
///
/// Honored keys: NDims (must be 3), DimSize, ElementSpacing (defaults to
/// 1 1 1), ElementType (MET_UCHAR or MET_FLOAT) and ElementDataFile, which is
/// resolved relative to the header's directory. Other keys are ignored.
/// Throws IoError with distinct messages for a malformed header, an
/// unsupported element type, or a payload whose size disagrees with DimSize.
Volume3D load_volume(const std::filesystem::path& header_path);

/// Writes `<stem>.mhd` and `<stem>.raw` next to it. Always MET_FLOAT.
void save_volume(const Volume3D& v, const std::filesystem::path& header_path);

}  // namespace despeckle
