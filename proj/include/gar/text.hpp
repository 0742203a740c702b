#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gar {

/// Lowercased alphanumeric tokens; every non-alphanumeric byte separates.
std::vector<std::string> tokenize(std::string_view text);

/// Collapse whitespace runs to single spaces and trim the ends.
std::string collapse_whitespace(std::string_view text);

/// True when `text` contains no non-whitespace byte.
bool is_blank(std::string_view text);

} // namespace gar
