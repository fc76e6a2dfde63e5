#pragma once

#include <string>

#include "lensfactory/api.hpp"

namespace lf {

/// Blocks serving the API over HTTP until the process is stopped.
void serve(Api& api, const std::string& host, int port);

}  // namespace lf
