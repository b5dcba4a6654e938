#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "travelrule/crypto.hpp"
#include "travelrule/datamodel.hpp"

namespace travelrule {

struct MembershipError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Authority-signed admission of a VASP into the permissioned network.
struct VaspCredential {
  VaspId vasp_id;
  PublicKey public_key;
  std::string display_name;
  std::string issued_at;   // RFC 3339 UTC
  std::string expires_at;  // RFC 3339 UTC, exclusive
  Signature authority_sig;

  bool operator==(const VaspCredential&) const = default;

  json unsigned_json() const {
    return json{{"vasp_id", vasp_id},
                {"public_key", public_key.hex()},
                {"display_name", display_name},
                {"issued_at", issued_at},
                {"expires_at", expires_at}};
  }
};

inline void to_json(json& j, const VaspCredential& c) {
  j = c.unsigned_json();
  j["authority_sig"] = c.authority_sig.hex();
}
inline void from_json(const json& j, VaspCredential& c) {
  j.at("vasp_id").get_to(c.vasp_id);
  c.public_key = PublicKey::parse(j.at("public_key").get<std::string>());
  j.at("display_name").get_to(c.display_name);
  j.at("issued_at").get_to(c.issued_at);
  j.at("expires_at").get_to(c.expires_at);
  c.authority_sig = Signature::parse(j.at("authority_sig").get<std::string>());
}

// Registry of admitted VASPs. Nodes treat a loaded snapshot as immutable and
// swap the whole snapshot on refresh.
class Registry {
 public:
  Registry() = default;
  explicit Registry(PublicKey authority_pk) : authority_pk_(authority_pk) {}

  const PublicKey& authority_public_key() const { return authority_pk_; }

  VaspCredential issue(const KeyPair& authority_key, const VaspId& vasp_id,
                       const PublicKey& public_key,
                       const std::string& display_name,
                       std::int64_t issued_at_seconds, int validity_days) {
    if (!VaspId::well_formed(vasp_id.value))
      throw MembershipError("invalid vasp id: " + vasp_id.value);
    if (validity_days <= 0)
      throw MembershipError("validity_days must be positive");
    if (authority_key.public_key() != authority_pk_)
      throw MembershipError("authority key does not match registry");
    auto it = credentials_.find(vasp_id);
    if (it != credentials_.end() && !revoked_.contains(vasp_id))
      throw MembershipError("duplicate credential for " + vasp_id.value);
    revoked_.erase(vasp_id);  // re-admission supersedes an old revocation

    VaspCredential c;
    c.vasp_id = vasp_id;
    c.public_key = public_key;
    c.display_name = display_name;
    c.issued_at = format_rfc3339(issued_at_seconds);
    c.expires_at =
        format_rfc3339(issued_at_seconds + 86400LL * validity_days);
    c.authority_sig =
        authority_key.sign(canonical_digest(c.unsigned_json()).bytes);
    credentials_[vasp_id] = c;
    return c;
  }

  // true iff authority signature valid, now in [issued_at, expires_at),
  // and the id is not revoked.
  bool verify_credential(const VaspCredential& c,
                         std::int64_t now_seconds) const {
    if (revoked_.contains(c.vasp_id)) return false;
    auto issued = parse_rfc3339(c.issued_at);
    auto expires = parse_rfc3339(c.expires_at);
    if (!issued || !expires || *expires <= *issued) return false;
    if (now_seconds < *issued || now_seconds >= *expires) return false;
    return verify(authority_pk_,
                  std::span<const std::uint8_t>(
                      canonical_digest(c.unsigned_json()).bytes),
                  c.authority_sig);
  }

  void revoke(const VaspId& vasp_id) {
    if (!credentials_.contains(vasp_id))
      throw MembershipError("unknown vasp id: " + vasp_id.value);
    revoked_.insert(vasp_id);
  }

  std::optional<VaspCredential> credential_of(const VaspId& id) const {
    auto it = credentials_.find(id);
    if (it == credentials_.end()) return std::nullopt;
    return it->second;
  }

  // Key lookup with full credential verification; nullopt for unknown,
  // expired, or revoked members.
  std::optional<PublicKey> active_key_of(const VaspId& id,
                                         std::int64_t now_seconds) const {
    auto c = credential_of(id);
    if (!c || !verify_credential(*c, now_seconds)) return std::nullopt;
    return c->public_key;
  }

  bool is_revoked(const VaspId& id) const { return revoked_.contains(id); }

  const std::map<VaspId, VaspCredential>& credentials() const {
    return credentials_;
  }
  const std::set<VaspId>& revoked() const { return revoked_; }

  json to_snapshot() const {
    json creds = json::array();
    for (const auto& [id, c] : credentials_) creds.push_back(c);
    json rev = json::array();
    for (const auto& id : revoked_) rev.push_back(id);
    return json{{"authority_pk", authority_pk_.hex()},
                {"credentials", creds},
                {"revoked", rev}};
  }

  static Registry from_snapshot(const json& j) {
    Registry r(PublicKey::parse(j.at("authority_pk").get<std::string>()));
    for (const auto& cj : j.at("credentials")) {
      VaspCredential c = cj.get<VaspCredential>();
      r.credentials_[c.vasp_id] = c;
    }
    for (const auto& idj : j.at("revoked"))
      r.revoked_.insert(idj.get<VaspId>());
    return r;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw MembershipError("cannot write registry: " + path);
    f << canonical_bytes(to_snapshot()) << "\n";
  }

  static Registry load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MembershipError("cannot read registry: " + path);
    json j = json::parse(f);
    return from_snapshot(j);
  }

 private:
  PublicKey authority_pk_;
  std::map<VaspId, VaspCredential> credentials_;
  std::set<VaspId> revoked_;
};

}  // namespace travelrule
