#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace horowalk {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `horowalk` tool. Diagnostics go to `err`, tabular
/// summaries to `out`.
int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

}  // namespace horowalk
