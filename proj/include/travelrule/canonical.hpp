#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>

#include <unicode/errorcode.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

namespace travelrule {

using json = nlohmann::json;  // object_t is std::map: keys already sorted
                              // by Unicode code point for UTF-8 strings

struct SerializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const icu::Normalizer2& nfc_normalizer() {
  icu::ErrorCode ec;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(ec);
  if (ec.isFailure() || n == nullptr)
    throw SerializationError("ICU NFC normalizer unavailable");
  return *n;
}

inline std::string nfc(const std::string& utf8) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(utf8);
  icu::ErrorCode ec;
  icu::UnicodeString normalized = nfc_normalizer().normalize(us, ec);
  if (ec.isFailure()) throw SerializationError("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

// Full Unicode case folding, used by name matching (denylists).
inline std::string case_fold(const std::string& utf8) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(utf8);
  us.foldCase();
  std::string out;
  us.toUTF8String(out);
  return out;
}

inline std::size_t utf8_codepoints(const std::string& utf8) {
  return static_cast<std::size_t>(
      icu::UnicodeString::fromUTF8(utf8).countChar32());
}

namespace detail {
inline void normalize_strings(json& j) {
  switch (j.type()) {
    case json::value_t::string:
      j = nfc(j.get_ref<const std::string&>());
      break;
    case json::value_t::array:
      for (auto& e : j) normalize_strings(e);
      break;
    case json::value_t::object:
      // std::map keys are immutable in place; rebuild if any key changes.
      {
        bool keys_clean = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
          if (nfc(it.key()) != it.key()) {
            keys_clean = false;
            break;
          }
        }
        if (keys_clean) {
          for (auto& e : j) normalize_strings(e);
        } else {
          json rebuilt = json::object();
          for (auto it = j.begin(); it != j.end(); ++it) {
            json v = it.value();
            normalize_strings(v);
            rebuilt[nfc(it.key())] = std::move(v);
          }
          j = std::move(rebuilt);
        }
      }
      break;
    case json::value_t::number_float:
      throw SerializationError(
          "floating point values are not canonically serializable");
    case json::value_t::binary:
    case json::value_t::discarded:
      throw SerializationError("value has no canonical form");
    default:
      break;
  }
}
}  // namespace detail

// Deterministic byte form: UTF-8 JSON, keys sorted, no insignificant
// whitespace, strings NFC-normalized. Equal values produce identical bytes.
inline std::string canonical_bytes(json value) {
  detail::normalize_strings(value);
  return value.dump(-1, ' ', false, json::error_handler_t::strict);
}

}  // namespace travelrule
