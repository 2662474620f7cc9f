#pragma once

// Framework-neutral logit dumps.
//
// Logit file (little-endian):
//   char[4] magic = "GDKD"
//   u32     version = 1
//   u64     n        (samples)
//   u32     C        (classes)
//   f32     values[n * C], row-major
// Label sidecar: u32 labels[n], little-endian, no header.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "gdkd/numeric.hpp"

namespace gdkd {

inline constexpr std::uint32_t kLogitDumpVersion = 1;

void write_logit_dump(std::ostream& os, const Matrix& logits);
Matrix read_logit_dump(std::istream& is);

void write_labels(std::ostream& os, std::span<const Index> labels);
/// Reads labels until end of stream.
IndexSet read_labels(std::istream& is);

Matrix read_logit_file(const std::filesystem::path& path);
IndexSet read_label_file(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace gdkd
