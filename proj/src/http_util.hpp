#pragma once

#include <string>

namespace gar::detail {

struct EndpointParts {
    std::string base;      // scheme://host[:port]
    std::string path_root; // leading path, "" or "/prefix"
};

inline EndpointParts split_endpoint(const std::string& endpoint) {
    std::string url = endpoint;
    if (url.find("://") == std::string::npos) {
        url = "http://" + url;
    }
    const auto scheme_end = url.find("://") + 3;
    const auto slash = url.find('/', scheme_end);
    if (slash == std::string::npos) {
        return {url, ""};
    }
    std::string path = url.substr(slash);
    while (!path.empty() && path.back() == '/') {
        path.pop_back();
    }
    return {url.substr(0, slash), path};
}

} // namespace gar::detail
