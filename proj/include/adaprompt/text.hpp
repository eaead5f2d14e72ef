#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "adaprompt/errors.hpp"

namespace adaprompt {

namespace detail {

inline void append_codepoint(std::string& out, UChar32 cp) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool err = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, cp, err);
    if (!err) out.append(reinterpret_cast<const char*>(buf), static_cast<size_t>(n));
}

// Decodes text into code points; malformed byte sequences come back as U+FFFD.
inline std::vector<UChar32> codepoints(std::string_view text) {
    std::vector<UChar32> cps;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(text.size());
    while (i < len) {
        UChar32 cp;
        U8_NEXT(s, i, len, cp);
        cps.push_back(cp < 0 ? 0xFFFD : cp);
    }
    return cps;
}

} // namespace detail

/// Lowercased maximal runs of Unicode letters or digits; every other code
/// point is a separator. Empty input gives an empty list.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(text.size());
    while (i < len) {
        UChar32 cp;
        U8_NEXT(s, i, len, cp);
        if (cp >= 0 && u_isalnum(cp)) {
            detail::append_codepoint(current, u_tolower(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Same lowercase mapping the tokenizer applies, for matching user-supplied
/// words against backend tokens.
inline std::string fold_token(std::string_view word) {
    std::string out;
    for (UChar32 cp : detail::codepoints(word)) detail::append_codepoint(out, u_tolower(cp));
    return out;
}

/// True when every code point is a letter.
inline bool is_alphabetic_token(std::string_view token) {
    auto cps = detail::codepoints(token);
    if (cps.empty()) return false;
    for (UChar32 cp : cps)
        if (!u_isalpha(cp)) return false;
    return true;
}

inline size_t codepoint_length(std::string_view text) { return detail::codepoints(text).size(); }

inline std::string nfc_normalize(std::string_view text) {
    UErrorCode ec = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(ec);
    if (U_FAILURE(ec) || norm == nullptr)
        throw Error(ErrorKind::Io, "ICU NFC normalizer unavailable");
    icu::UnicodeString in =
        icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString out = norm->normalize(in, ec);
    std::string result;
    if (U_FAILURE(ec)) {
        in.toUTF8String(result);
        return result;
    }
    out.toUTF8String(result);
    return result;
}

inline bool is_space_cp(UChar32 cp) { return u_isUWhiteSpace(cp); }

/// NFC + surrounding-whitespace trim. Applied to every sentence before
/// indexing and before dedup.
inline std::string normalize_sentence(std::string_view raw) {
    std::string composed = nfc_normalize(raw);
    auto cps = detail::codepoints(composed);
    size_t b = 0, e = cps.size();
    while (b < e && is_space_cp(cps[b])) ++b;
    while (e > b && is_space_cp(cps[e - 1])) --e;
    std::string out;
    for (size_t i = b; i < e; ++i) detail::append_codepoint(out, cps[i]);
    return out;
}

/// Dedup key for retrieved sentences: NFC, interior whitespace runs collapsed
/// to a single space, case preserved.
inline std::string dedup_key(std::string_view sentence) {
    std::string composed = nfc_normalize(sentence);
    auto cps = detail::codepoints(composed);
    std::string out;
    bool in_space = false;
    for (UChar32 cp : cps) {
        if (is_space_cp(cp)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        detail::append_codepoint(out, cp);
    }
    return out;
}

} // namespace adaprompt
