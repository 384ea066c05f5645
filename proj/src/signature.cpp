#include "cascade/signature.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

namespace cascade {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string strip_spaces(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!is_space(c)) out.push_back(c);
    return out;
}

// Splits on commas at nesting depth zero.
std::vector<std::string_view> split_params(std::string_view list) {
    std::vector<std::string_view> parts;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        char c = list[i];
        if (c == '(' || c == '[') ++depth;
        else if (c == ')' || c == ']') --depth;
        else if (c == ',' && depth == 0) {
            parts.push_back(list.substr(start, i - start));
            start = i + 1;
        }
    }
    parts.push_back(list.substr(start));
    return parts;
}

std::string canonical_param_list(std::string_view list);

std::string canonical_param(std::string_view param) {
    param = trim(param);
    if (param.empty()) return {};
    if (param.front() == '(') {
        int depth = 0;
        std::size_t close = std::string_view::npos;
        for (std::size_t i = 0; i < param.size(); ++i) {
            if (param[i] == '(') ++depth;
            else if (param[i] == ')' && --depth == 0) {
                close = i;
                break;
            }
        }
        if (close == std::string_view::npos) return strip_spaces(param);
        std::string out = "(" + canonical_param_list(param.substr(1, close - 1)) + ")";
        // Array suffixes may be separated by whitespace; names follow after.
        std::string_view rest = param.substr(close + 1);
        std::size_t i = 0;
        while (i < rest.size()) {
            while (i < rest.size() && is_space(rest[i])) ++i;
            if (i < rest.size() && rest[i] == '[') {
                std::size_t end = rest.find(']', i);
                if (end == std::string_view::npos) break;
                out += strip_spaces(rest.substr(i, end - i + 1));
                i = end + 1;
            } else {
                break;
            }
        }
        return out;
    }
    // Type token ends at the first whitespace that is not followed by an array suffix.
    std::string type;
    std::size_t i = 0;
    while (i < param.size() && !is_space(param[i])) type.push_back(param[i++]);
    while (i < param.size()) {
        std::size_t j = i;
        while (j < param.size() && is_space(param[j])) ++j;
        if (j < param.size() && param[j] == '[') {
            std::size_t end = param.find(']', j);
            if (end == std::string_view::npos) break;
            type += strip_spaces(param.substr(j, end - j + 1));
            i = end + 1;
        } else {
            break;
        }
    }
    return lower(type);
}

std::string canonical_param_list(std::string_view list) {
    if (trim(list).empty()) return {};
    std::string out;
    bool first = true;
    for (auto p : split_params(list)) {
        if (!first) out.push_back(',');
        out += canonical_param(p);
        first = false;
    }
    return out;
}

} // namespace

std::string canonicalize_signature(std::string_view signature) {
    signature = trim(signature);
    auto open = signature.find('(');
    auto close = signature.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
        return strip_spaces(signature);
    std::string name = strip_spaces(signature.substr(0, open));
    return name + "(" + canonical_param_list(signature.substr(open + 1, close - open - 1)) + ")";
}

std::string_view function_name(std::string_view signature) {
    signature = trim(signature);
    auto open = signature.find('(');
    return trim(signature.substr(0, open));
}

} // namespace cascade
