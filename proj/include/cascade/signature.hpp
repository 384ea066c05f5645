#pragma once

#include <string>
#include <string_view>

namespace cascade {

/// Canonical form of a textual function signature: whitespace stripped,
/// parameter names and data-location keywords removed, types lowercased.
/// "transfer( address to , uint256 amount )" -> "transfer(address,uint256)".
/// Tuple parameters are canonicalized recursively. The function name keeps its case.
std::string canonicalize_signature(std::string_view signature);

/// Function name part of a signature ("emergencyBurn(address)" -> "emergencyBurn").
std::string_view function_name(std::string_view signature);

} // namespace cascade
