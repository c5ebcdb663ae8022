#pragma once

#include <functional>
#include <string>

namespace square::log {

using Sink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Thread-safe.
void warn(const std::string& message);

// Returns the previous sink. Pass an empty function to restore stderr.
Sink set_warning_sink(Sink sink);

}  // namespace square::log
