#pragma once

#include <filesystem>

namespace hiaer::test {

inline std::filesystem::path data_dir() { return std::filesystem::path(HIAER_DATA_DIR); }

}  // namespace hiaer::test
