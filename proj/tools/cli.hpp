#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlf/gateway/provider.hpp"

namespace nlf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitItemFailures = 1;
inline constexpr int kExitConfig = 2;

/// Extra provider kinds usable from profiles, keyed by kind. Embedders use this to plug in
/// an in-process model; the command line itself only knows fixtures, http and record.
using ProviderKinds = std::map<std::string, std::function<std::shared_ptr<gateway::Provider>()>>;

/// Runs one command line (program name excluded) and returns the exit code. Diagnostics go
/// to `log`; help text goes to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log,
        const ProviderKinds& extra_kinds = {});

}  // namespace nlf::cli
