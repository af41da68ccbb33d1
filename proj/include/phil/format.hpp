#pragma once

#include <cstdio>
#include <string>

namespace phil {

/// Shortest round-trip decimal form of a double: 17 significant digits,
/// '.' decimal separator regardless of locale. Every number that leaves
/// the library (CSV cells, master logs) goes through here so that equal
/// doubles always produce equal bytes.
inline std::string format_g17(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    // snprintf honours the C locale in this codebase (we never call
    // setlocale), so the separator is already '.'; normalise defensively
    // in case an embedding application changed the global locale.
    for (char& c : buf) {
        if (c == '\0') break;
        if (c == ',') c = '.';
    }
    return std::string(buf);
}

inline std::string format_u64(unsigned long long value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%llu", value);
    return std::string(buf);
}

}  // namespace phil
