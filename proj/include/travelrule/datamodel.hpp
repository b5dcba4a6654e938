#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "travelrule/canonical.hpp"
#include "travelrule/timeutil.hpp"

namespace travelrule {

struct Violation {
  std::string field;
  std::string message;
  bool operator==(const Violation&) const = default;
};

using Violations = std::vector<Violation>;

struct ValidationError : std::runtime_error {
  explicit ValidationError(const Violations& vs)
      : std::runtime_error(describe(vs)), violations(vs) {}
  Violations violations;

  static std::string describe(const Violations& vs) {
    std::string s = "validation failed:";
    for (const auto& v : vs) s += " [" + v.field + "] " + v.message + ";";
    return s;
  }
};

inline void throw_if_invalid(const Violations& vs) {
  if (!vs.empty()) throw ValidationError(vs);
}

// ---------------------------------------------------------------------------
// VaspId

struct VaspId {
  std::string value;

  bool operator==(const VaspId&) const = default;
  auto operator<=>(const VaspId&) const = default;

  static bool well_formed(const std::string& s) {
    if (s.empty() || s.size() > 64) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    });
  }
};

inline void to_json(json& j, const VaspId& v) { j = v.value; }
inline void from_json(const json& j, VaspId& v) {
  v.value = j.get<std::string>();
  if (!VaspId::well_formed(v.value))
    throw ValidationError(Violations{{"vasp_id", "must be 1-64 chars of [a-z0-9-]"}});
}

// ---------------------------------------------------------------------------
// VirtualAssetAddress

struct VirtualAssetAddress {
  std::string asset;    // ticker, e.g. "BTC"
  std::string address;

  bool operator==(const VirtualAssetAddress&) const = default;
  auto operator<=>(const VirtualAssetAddress&) const = default;
};

inline void to_json(json& j, const VirtualAssetAddress& a) {
  j = json{{"asset", a.asset}, {"address", a.address}};
}
inline void from_json(const json& j, VirtualAssetAddress& a) {
  j.at("asset").get_to(a.asset);
  j.at("address").get_to(a.address);
}

inline bool valid_asset_ticker(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  });
}

inline Violations validate_address(const VirtualAssetAddress& a,
                                   const std::string& field = "address") {
  Violations out;
  if (!valid_asset_ticker(a.asset))
    out.push_back({field + ".asset", "asset not uppercase alphanumeric"});
  if (a.address.empty()) out.push_back({field + ".address", "address empty"});
  if (a.address.size() > 128)
    out.push_back({field + ".address", "address longer than 128 chars"});
  return out;
}

// ---------------------------------------------------------------------------
// PartyInfo — originator or beneficiary identity as exchanged in Step 1.

struct PartyInfo {
  std::string name;  // legal name, compared NFC-normalized and trimmed
  VirtualAssetAddress address;

  bool operator==(const PartyInfo&) const = default;
};

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline void to_json(json& j, const PartyInfo& p) {
  j = json{{"name", p.name}, {"address", p.address}};
}
inline void from_json(const json& j, PartyInfo& p) {
  j.at("name").get_to(p.name);
  j.at("address").get_to(p.address);
}

inline Violations validate_party_info(const PartyInfo& p) {
  Violations out;
  if (trim(p.name).empty()) out.push_back({"name", "name empty"});
  if (utf8_codepoints(p.name) > 256)
    out.push_back({"name", "name longer than 256 chars"});
  auto av = validate_address(p.address);
  out.insert(out.end(), av.begin(), av.end());
  return out;
}

// ---------------------------------------------------------------------------
// Amounts are decimal strings, never floats; at most 18 fractional digits.

inline std::optional<std::string> amount_problem(const std::string& s) {
  auto dot = s.find('.');
  std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
  auto all_digits = [](const std::string& p) {
    return !p.empty() &&
           std::all_of(p.begin(), p.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
  };
  if (!all_digits(whole) || (dot != std::string::npos && !all_digits(frac)))
    return "amount not a decimal number";
  if (frac.size() > 18) return "amount precision exceeds 18 fractional digits";
  bool nonzero = std::any_of(whole.begin(), whole.end(),
                             [](char c) { return c != '0'; }) ||
                 std::any_of(frac.begin(), frac.end(),
                             [](char c) { return c != '0'; });
  if (!nonzero) return "amount not positive";
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// TransactionInfo — what VASP 2 checks before confirming the transfer.

struct TransactionInfo {
  std::string tx_id;
  std::string asset;
  std::string amount;
  VirtualAssetAddress originator_address;
  VirtualAssetAddress beneficiary_address;
  std::string executed_at;  // RFC 3339 UTC

  bool operator==(const TransactionInfo&) const = default;
};

inline void to_json(json& j, const TransactionInfo& t) {
  j = json{{"tx_id", t.tx_id},
           {"asset", t.asset},
           {"amount", t.amount},
           {"originator_address", t.originator_address},
           {"beneficiary_address", t.beneficiary_address},
           {"executed_at", t.executed_at}};
}
inline void from_json(const json& j, TransactionInfo& t) {
  j.at("tx_id").get_to(t.tx_id);
  j.at("asset").get_to(t.asset);
  j.at("amount").get_to(t.amount);
  j.at("originator_address").get_to(t.originator_address);
  j.at("beneficiary_address").get_to(t.beneficiary_address);
  j.at("executed_at").get_to(t.executed_at);
}

inline Violations validate_transaction_info(const TransactionInfo& t) {
  Violations out;
  if (t.tx_id.empty()) out.push_back({"tx_id", "tx_id empty"});
  if (!valid_asset_ticker(t.asset))
    out.push_back({"asset", "asset not uppercase alphanumeric"});
  if (auto p = amount_problem(t.amount)) out.push_back({"amount", *p});
  auto ov = validate_address(t.originator_address, "originator_address");
  out.insert(out.end(), ov.begin(), ov.end());
  auto bv = validate_address(t.beneficiary_address, "beneficiary_address");
  out.insert(out.end(), bv.begin(), bv.end());
  if (t.originator_address.asset != t.asset)
    out.push_back({"originator_address.asset", "asset ticker mismatch"});
  if (t.beneficiary_address.asset != t.asset)
    out.push_back({"beneficiary_address.asset", "asset ticker mismatch"});
  if (!parse_rfc3339(t.executed_at))
    out.push_back({"executed_at", "not an RFC 3339 UTC timestamp"});
  return out;
}

// ---------------------------------------------------------------------------
// RealNameInfo — Korean-law real-name confirmation identifier (Step 2).

enum class RealNameKind { RESIDENT_REGISTRATION, PASSPORT, ALIEN_REGISTRATION };

inline std::string to_string(RealNameKind k) {
  switch (k) {
    case RealNameKind::RESIDENT_REGISTRATION: return "RESIDENT_REGISTRATION";
    case RealNameKind::PASSPORT: return "PASSPORT";
    case RealNameKind::ALIEN_REGISTRATION: return "ALIEN_REGISTRATION";
  }
  throw ValidationError(Violations{{"real_name.kind", "unknown kind"}});
}

inline RealNameKind real_name_kind_from_string(const std::string& s) {
  if (s == "RESIDENT_REGISTRATION") return RealNameKind::RESIDENT_REGISTRATION;
  if (s == "PASSPORT") return RealNameKind::PASSPORT;
  if (s == "ALIEN_REGISTRATION") return RealNameKind::ALIEN_REGISTRATION;
  throw ValidationError(Violations{{"real_name.kind", "unknown kind: " + s}});
}

struct RealNameInfo {
  RealNameKind kind = RealNameKind::PASSPORT;
  std::string value;

  bool operator==(const RealNameInfo&) const = default;
};

inline void to_json(json& j, const RealNameInfo& r) {
  j = json{{"kind", to_string(r.kind)}, {"value", r.value}};
}
inline void from_json(const json& j, RealNameInfo& r) {
  r.kind = real_name_kind_from_string(j.at("kind").get<std::string>());
  j.at("value").get_to(r.value);
}

inline Violations validate_real_name(const RealNameInfo& r) {
  Violations out;
  if (r.value.empty() || r.value.size() > 64)
    out.push_back({"real_name.value", "identifier must be 1-64 chars"});
  return out;
}

// ---------------------------------------------------------------------------
// ReasonCode for additional-information requests.

enum class ReasonCode { STR, AUDIT, OTHER };

inline std::string to_string(ReasonCode r) {
  switch (r) {
    case ReasonCode::STR: return "STR";
    case ReasonCode::AUDIT: return "AUDIT";
    case ReasonCode::OTHER: return "OTHER";
  }
  throw ValidationError(Violations{{"reason", "unknown reason code"}});
}

inline ReasonCode reason_code_from_string(const std::string& s) {
  if (s == "STR") return ReasonCode::STR;
  if (s == "AUDIT") return ReasonCode::AUDIT;
  if (s == "OTHER") return ReasonCode::OTHER;
  throw ValidationError(Violations{{"reason", "unknown reason code: " + s}});
}

inline void to_json(json& j, const ReasonCode& r) { j = to_string(r); }
inline void from_json(const json& j, ReasonCode& r) {
  r = reason_code_from_string(j.get<std::string>());
}

// ---------------------------------------------------------------------------
// CustomerRecord — the backend-side view of one customer.

struct CustomerRecord {
  std::string customer_id;
  std::string name;
  std::vector<VirtualAssetAddress> addresses;
  RealNameInfo real_name;

  bool operator==(const CustomerRecord&) const = default;
};

inline void to_json(json& j, const CustomerRecord& c) {
  j = json{{"customer_id", c.customer_id},
           {"name", c.name},
           {"addresses", c.addresses},
           {"real_name", c.real_name}};
}
inline void from_json(const json& j, CustomerRecord& c) {
  j.at("customer_id").get_to(c.customer_id);
  j.at("name").get_to(c.name);
  j.at("addresses").get_to(c.addresses);
  j.at("real_name").get_to(c.real_name);
}

inline Violations validate_customer_record(const CustomerRecord& c) {
  Violations out;
  if (c.customer_id.empty()) out.push_back({"customer_id", "empty"});
  if (trim(c.name).empty()) out.push_back({"name", "name empty"});
  if (c.addresses.empty()) out.push_back({"addresses", "no addresses"});
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& a : c.addresses) {
    auto av = validate_address(a, "addresses");
    out.insert(out.end(), av.begin(), av.end());
    if (!seen.insert({a.asset, a.address}).second)
      out.push_back({"addresses", "duplicate (asset, address) pair"});
  }
  auto rv = validate_real_name(c.real_name);
  out.insert(out.end(), rv.begin(), rv.end());
  return out;
}

// Name comparison rule: NFC-normalize, trim, case-fold.
inline std::string comparable_name(const std::string& name) {
  return case_fold(nfc(trim(name)));
}

}  // namespace travelrule
