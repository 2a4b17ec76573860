// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>

namespace muonq::cli {

/// Human-readable dump of a MUQ1 checkpoint. Throws muonq::Error when the
/// file is missing or malformed.
void inspect_checkpoint(const std::filesystem::path& path, std::ostream& out);

}  // namespace muonq::cli
