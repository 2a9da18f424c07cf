#pragma once

#include <string>
#include <vector>

namespace cascade::cli {

// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
int dispatch(const std::vector<std::string>& args);

}  // namespace cascade::cli
