#pragma once

#include "privmine/labels.hpp"

#include <chrono>
#include <string>
#include <thread>
#include <utility>

namespace privmine::detail {

// "http://host:8000/v1/x" -> {"http://host:8000", "/v1/x"}
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ValidationError("endpoint '" + url + "' is not an absolute http(s) URL");
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ValidationError("endpoint '" + url + "' must use http or https");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == scheme_end + 3 || scheme_end + 3 >= url.size())
        throw ValidationError("endpoint '" + url + "' has no host");
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline bool is_transient_status(int status) {
    return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

inline void backoff_sleep(std::chrono::milliseconds base, int retry) {
    const auto delay = base * (1LL << std::min(retry, 10));
    std::this_thread::sleep_for(delay);
}

} // namespace privmine::detail
