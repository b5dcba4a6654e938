#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "travelrule/crypto.hpp"
#include "travelrule/datamodel.hpp"
#include "travelrule/membership.hpp"

namespace travelrule {

struct LedgerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bilateral channel: exactly two distinct members, canonically ordered.
struct ChannelId {
  VaspId first;
  VaspId second;

  ChannelId() = default;
  ChannelId(VaspId a, VaspId b) {
    if (a == b) throw LedgerError("channel members must be distinct");
    if (b < a) std::swap(a, b);
    first = std::move(a);
    second = std::move(b);
  }

  bool operator==(const ChannelId&) const = default;
  auto operator<=>(const ChannelId&) const = default;

  bool has_member(const VaspId& id) const {
    return id == first || id == second;
  }
  VaspId other(const VaspId& id) const {
    if (id == first) return second;
    if (id == second) return first;
    throw LedgerError(id.value + " is not a member of channel " + str());
  }
  std::string str() const { return first.value + "__" + second.value; }
};

inline void to_json(json& j, const ChannelId& c) {
  j = json::array({c.first, c.second});
}
inline void from_json(const json& j, ChannelId& c) {
  if (!j.is_array() || j.size() != 2) throw LedgerError("bad channel id");
  c = ChannelId(j.at(0).get<VaspId>(), j.at(1).get<VaspId>());
}

// ---------------------------------------------------------------------------
// Entry payloads

// Finalized Step 1 payload: all personal and transaction data of one
// completed transfer.
struct TravelRuleRecord {
  std::string session_id;
  PartyInfo originator;
  PartyInfo beneficiary;
  TransactionInfo tx;

  bool operator==(const TravelRuleRecord&) const = default;
};

inline void to_json(json& j, const TravelRuleRecord& r) {
  j = json{{"type", "travel_rule_record"},
           {"session_id", r.session_id},
           {"originator", r.originator},
           {"beneficiary", r.beneficiary},
           {"tx", r.tx}};
}
inline void from_json(const json& j, TravelRuleRecord& r) {
  j.at("session_id").get_to(r.session_id);
  j.at("originator").get_to(r.originator);
  j.at("beneficiary").get_to(r.beneficiary);
  j.at("tx").get_to(r.tx);
}

// Step 2 payload: the real-name disclosure, chained to the record it
// concerns.
struct AdditionalInfoRecord {
  std::string session_id;
  Digest ref_entry;  // entry_hash of the referenced TravelRuleRecord entry
  ReasonCode reason = ReasonCode::OTHER;
  RealNameInfo real_name;

  bool operator==(const AdditionalInfoRecord&) const = default;
};

inline void to_json(json& j, const AdditionalInfoRecord& r) {
  j = json{{"type", "additional_info_record"},
           {"session_id", r.session_id},
           {"ref_entry", r.ref_entry.hex()},
           {"reason", r.reason},
           {"real_name", r.real_name}};
}
inline void from_json(const json& j, AdditionalInfoRecord& r) {
  j.at("session_id").get_to(r.session_id);
  r.ref_entry = Digest::parse(j.at("ref_entry").get<std::string>());
  j.at("reason").get_to(r.reason);
  j.at("real_name").get_to(r.real_name);
}

using EntryPayload = std::variant<TravelRuleRecord, AdditionalInfoRecord>;

inline json payload_to_json(const EntryPayload& p) {
  return std::visit([](const auto& v) { return json(v); }, p);
}

inline EntryPayload payload_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "travel_rule_record") return j.get<TravelRuleRecord>();
  if (type == "additional_info_record") return j.get<AdditionalInfoRecord>();
  throw LedgerError("unknown payload type: " + type);
}

// ---------------------------------------------------------------------------
// Entries

// Entry as signed by the proposer; lacks the counterparty signature and the
// final hash.
struct ProposedEntry {
  ChannelId channel;
  std::uint64_t seq = 0;
  Digest prev_hash;
  EntryPayload payload;
  std::string created_at;  // proposer's clock, RFC 3339 UTC
  VaspId proposer;
  Signature proposer_sig;

  // The bytes both parties sign.
  json signing_json() const {
    return json{{"channel", channel},
                {"seq", seq},
                {"prev_hash", prev_hash.hex()},
                {"payload", payload_to_json(payload)},
                {"created_at", created_at},
                {"proposer", proposer}};
  }
  Digest signing_digest() const { return canonical_digest(signing_json()); }
};

inline void to_json(json& j, const ProposedEntry& e) {
  j = e.signing_json();
  j["proposer_sig"] = e.proposer_sig.hex();
}
inline void from_json(const json& j, ProposedEntry& e) {
  j.at("channel").get_to(e.channel);
  j.at("seq").get_to(e.seq);
  e.prev_hash = Digest::parse(j.at("prev_hash").get<std::string>());
  e.payload = payload_from_json(j.at("payload"));
  j.at("created_at").get_to(e.created_at);
  j.at("proposer").get_to(e.proposer);
  e.proposer_sig = Signature::parse(j.at("proposer_sig").get<std::string>());
}

// Finalized, dual-signed, hash-chained entry.
struct LedgerEntry {
  ChannelId channel;
  std::uint64_t seq = 0;
  Digest prev_hash;
  EntryPayload payload;
  std::string created_at;
  VaspId proposer;
  Signature proposer_sig;
  Signature acceptor_sig;
  Digest entry_hash;

  json signing_json() const {
    return json{{"channel", channel},
                {"seq", seq},
                {"prev_hash", prev_hash.hex()},
                {"payload", payload_to_json(payload)},
                {"created_at", created_at},
                {"proposer", proposer}};
  }
  Digest signing_digest() const { return canonical_digest(signing_json()); }

  // entry_hash covers everything except itself.
  json hashed_json() const {
    json j = signing_json();
    j["proposer_sig"] = proposer_sig.hex();
    j["acceptor_sig"] = acceptor_sig.hex();
    return j;
  }
  Digest compute_entry_hash() const { return canonical_digest(hashed_json()); }
};

inline void to_json(json& j, const LedgerEntry& e) {
  j = e.hashed_json();
  j["entry_hash"] = e.entry_hash.hex();
}
inline void from_json(const json& j, LedgerEntry& e) {
  j.at("channel").get_to(e.channel);
  j.at("seq").get_to(e.seq);
  e.prev_hash = Digest::parse(j.at("prev_hash").get<std::string>());
  e.payload = payload_from_json(j.at("payload"));
  j.at("created_at").get_to(e.created_at);
  j.at("proposer").get_to(e.proposer);
  e.proposer_sig = Signature::parse(j.at("proposer_sig").get<std::string>());
  e.acceptor_sig = Signature::parse(j.at("acceptor_sig").get<std::string>());
  e.entry_hash = Digest::parse(j.at("entry_hash").get<std::string>());
}

// ---------------------------------------------------------------------------
// Verification

// Checks one entry in isolation: hash correctness and both signatures under
// the members' registered keys. Linkage is verify_chain's job.
inline bool verify_entry(const LedgerEntry& e, const Registry& registry) {
  if (!e.channel.has_member(e.proposer)) return false;
  const VaspId acceptor = e.channel.other(e.proposer);
  auto created = parse_rfc3339(e.created_at);
  if (!created) return false;
  auto proposer_key = registry.credential_of(e.proposer);
  auto acceptor_key = registry.credential_of(acceptor);
  if (!proposer_key || !acceptor_key) return false;
  if (e.compute_entry_hash() != e.entry_hash) return false;
  const Digest signed_digest = e.signing_digest();
  if (!verify(proposer_key->public_key,
              std::span<const std::uint8_t>(signed_digest.bytes),
              e.proposer_sig))
    return false;
  if (!verify(acceptor_key->public_key,
              std::span<const std::uint8_t>(signed_digest.bytes),
              e.acceptor_sig))
    return false;
  if (const auto* add = std::get_if<AdditionalInfoRecord>(&e.payload)) {
    if (!validate_real_name(add->real_name).empty()) return false;
  }
  return true;
}

struct ChainReport {
  bool ok = true;
  std::uint64_t bad_index = 0;
  std::string reason;

  static ChainReport good() { return {}; }
  static ChainReport bad(std::uint64_t index, std::string why) {
    return {false, index, std::move(why)};
  }
};

inline void to_json(json& j, const ChainReport& r) {
  j = json{{"ok", r.ok}};
  if (!r.ok) {
    j["bad_index"] = r.bad_index;
    j["reason"] = r.reason;
  }
}

// Full-chain verification: per-entry validity plus seq/prev_hash linkage and
// AdditionalInfoRecord back-references.
inline ChainReport verify_chain(const std::vector<LedgerEntry>& entries,
                                const Registry& registry) {
  Digest expected_prev = Digest::zero();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const LedgerEntry& e = entries[i];
    if (e.seq != i) return ChainReport::bad(i, "seq gap");
    if (e.prev_hash != expected_prev)
      return ChainReport::bad(i, "prev_hash mismatch");
    if (i > 0 && e.channel != entries[0].channel)
      return ChainReport::bad(i, "channel mismatch");
    if (!verify_entry(e, registry))
      return ChainReport::bad(i, "entry invalid");
    if (const auto* add = std::get_if<AdditionalInfoRecord>(&e.payload)) {
      bool found = false;
      for (std::size_t k = 0; k < i; ++k) {
        if (entries[k].entry_hash == add->ref_entry &&
            std::holds_alternative<TravelRuleRecord>(entries[k].payload)) {
          found = true;
          break;
        }
      }
      if (!found) return ChainReport::bad(i, "dangling ref_entry");
    }
    expected_prev = e.entry_hash;
  }
  return ChainReport::good();
}

struct DivergenceReport {
  bool identical = true;
  std::uint64_t first_divergent_seq = 0;

  static DivergenceReport same() { return {}; }
  static DivergenceReport differ(std::uint64_t seq) { return {false, seq}; }
};

inline void to_json(json& j, const DivergenceReport& r) {
  j = json{{"identical", r.identical}};
  if (!r.identical) j["first_divergent_seq"] = r.first_divergent_seq;
}

inline DivergenceReport diff_replicas(const std::vector<LedgerEntry>& a,
                                      const std::vector<LedgerEntry>& b) {
  const std::size_t common = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (a[i].entry_hash != b[i].entry_hash)
      return DivergenceReport::differ(i);
  }
  if (a.size() != b.size()) return DivergenceReport::differ(common);
  return DivergenceReport::same();
}

// ---------------------------------------------------------------------------
// Channel ledger: one replica of one bilateral channel. Append-only; the
// backing file is only ever opened for append.

class ChannelLedger {
 public:
  ChannelLedger(ChannelId channel, std::string file_path = "")
      : channel_(std::move(channel)), path_(std::move(file_path)) {}

  const ChannelId& channel() const { return channel_; }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::uint64_t next_seq() const { return entries_.size(); }

  Digest head_hash() const {
    return entries_.empty() ? Digest::zero() : entries_.back().entry_hash;
  }

  std::optional<LedgerEntry> find_by_hash(const Digest& h) const {
    for (const auto& e : entries_)
      if (e.entry_hash == h) return e;
    return std::nullopt;
  }

  ProposedEntry propose(EntryPayload payload, const VaspId& proposer,
                        const KeyPair& key, const std::string& created_at) const {
    if (!channel_.has_member(proposer))
      throw LedgerError("proposer not a channel member");
    if (const auto* add = std::get_if<AdditionalInfoRecord>(&payload)) {
      auto ref = find_by_hash(add->ref_entry);
      if (!ref || !std::holds_alternative<TravelRuleRecord>(ref->payload))
        throw LedgerError("ref_entry does not name a travel rule record "
                          "in this channel");
    }
    ProposedEntry p;
    p.channel = channel_;
    p.seq = next_seq();
    p.prev_hash = head_hash();
    p.payload = std::move(payload);
    p.created_at = created_at;
    p.proposer = proposer;
    p.proposer_sig = key.sign(p.signing_digest().bytes);
    return p;
  }

  static constexpr std::int64_t kMaxClockSkewSeconds = 300;

  // Countersigns a proposal against this replica's head, appends the
  // finalized entry, and returns it. This is the only way a LedgerEntry
  // comes into existence.
  LedgerEntry countersign(const ProposedEntry& p, const VaspId& acceptor,
                          const KeyPair& key, const Registry& registry,
                          std::int64_t now_seconds) {
    if (!channel_.has_member(acceptor) || p.proposer == acceptor)
      throw LedgerError("acceptor is not the counterparty");
    if (p.channel != channel_) throw LedgerError("channel mismatch");
    if (p.seq != next_seq())
      throw LedgerError("stale proposal: head moved");
    if (p.prev_hash != head_hash())
      throw LedgerError("stale proposal: prev_hash mismatch");
    auto created = parse_rfc3339(p.created_at);
    if (!created) throw LedgerError("bad created_at");
    if (std::llabs(*created - now_seconds) > kMaxClockSkewSeconds)
      throw LedgerError("created_at outside clock skew bound");
    auto proposer_key = registry.active_key_of(p.proposer, now_seconds);
    if (!proposer_key) throw LedgerError("proposer has no active credential");
    const Digest d = p.signing_digest();
    if (!verify(*proposer_key, std::span<const std::uint8_t>(d.bytes),
                p.proposer_sig))
      throw LedgerError("bad proposer signature");
    if (const auto* add = std::get_if<AdditionalInfoRecord>(&p.payload)) {
      auto ref = find_by_hash(add->ref_entry);
      if (!ref || !std::holds_alternative<TravelRuleRecord>(ref->payload))
        throw LedgerError("ref_entry unknown on this replica");
    }

    LedgerEntry e;
    e.channel = p.channel;
    e.seq = p.seq;
    e.prev_hash = p.prev_hash;
    e.payload = p.payload;
    e.created_at = p.created_at;
    e.proposer = p.proposer;
    e.proposer_sig = p.proposer_sig;
    e.acceptor_sig = key.sign(d.bytes);
    e.entry_hash = e.compute_entry_hash();
    append(e);
    return e;
  }

  // Proposer-side append after the acceptor returned its signature.
  LedgerEntry finalize_as_proposer(const ProposedEntry& p,
                                   const Signature& acceptor_sig,
                                   const Registry& registry,
                                   std::int64_t now_seconds) {
    if (p.seq != next_seq() || p.prev_hash != head_hash())
      throw LedgerError("proposal no longer matches head");
    const VaspId acceptor = channel_.other(p.proposer);
    auto acceptor_key = registry.active_key_of(acceptor, now_seconds);
    if (!acceptor_key) throw LedgerError("acceptor has no active credential");
    const Digest d = p.signing_digest();
    if (!verify(*acceptor_key, std::span<const std::uint8_t>(d.bytes),
                acceptor_sig))
      throw LedgerError("bad acceptor signature");

    LedgerEntry e;
    e.channel = p.channel;
    e.seq = p.seq;
    e.prev_hash = p.prev_hash;
    e.payload = p.payload;
    e.created_at = p.created_at;
    e.proposer = p.proposer;
    e.proposer_sig = p.proposer_sig;
    e.acceptor_sig = acceptor_sig;
    e.entry_hash = e.compute_entry_hash();
    append(e);
    return e;
  }

  // Loads a channel file; throws LedgerError naming the bad line index if
  // any line fails to parse. Chain validity is checked separately.
  static std::vector<LedgerEntry> load_file(const std::string& path) {
    std::vector<LedgerEntry> out;
    std::ifstream f(path);
    if (!f) return out;
    std::string line;
    std::size_t index = 0;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      try {
        out.push_back(json::parse(line).get<LedgerEntry>());
      } catch (const std::exception& e) {
        throw LedgerError("unreadable entry at index " +
                          std::to_string(index) + ": " + e.what());
      }
      ++index;
    }
    return out;
  }

  static ChannelLedger open(ChannelId channel, const std::string& path,
                            const Registry& registry) {
    ChannelLedger l(std::move(channel), path);
    std::vector<LedgerEntry> loaded;
    try {
      loaded = load_file(path);
    } catch (const LedgerError& e) {
      throw LedgerError("channel " + l.channel_.str() + ": " + e.what());
    }
    ChainReport report = verify_chain(loaded, registry);
    if (!report.ok)
      throw LedgerError("channel " + l.channel_.str() + ": bad entry at seq " +
                        std::to_string(report.bad_index) + " (" +
                        report.reason + ")");
    l.entries_ = std::move(loaded);
    return l;
  }

 private:
  void append(const LedgerEntry& e) {
    if (!path_.empty()) {
      int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0600);
      if (fd < 0) throw LedgerError("cannot open channel file: " + path_);
      std::string line = canonical_bytes(json(e)) + "\n";
      ssize_t n = ::write(fd, line.data(), line.size());
      if (n != static_cast<ssize_t>(line.size()) || ::fsync(fd) != 0) {
        ::close(fd);
        throw LedgerError("append failed: " + path_);
      }
      ::close(fd);
    }
    entries_.push_back(e);
  }

  ChannelId channel_;
  std::string path_;
  std::vector<LedgerEntry> entries_;
};

inline std::string channel_file_path(const std::string& data_dir,
                                     const ChannelId& channel) {
  return data_dir + "/channels/" + channel.str() + ".jsonl";
}

// File-level verification: an unparseable line counts as a bad entry at its
// own index, so byte-level tampering is always attributed to a sequence
// number.
inline ChainReport verify_channel_file(const std::string& path,
                                       const Registry& registry) {
  std::vector<LedgerEntry> entries;
  std::ifstream f(path);
  if (!f) return ChainReport::bad(0, "cannot open file");
  std::string line;
  std::size_t index = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      entries.push_back(json::parse(line).get<LedgerEntry>());
    } catch (const std::exception& e) {
      return ChainReport::bad(index, std::string("unreadable entry: ") +
                                         e.what());
    }
    ++index;
  }
  return verify_chain(entries, registry);
}

// All channel replicas held by one node. With an empty data_dir the store is
// memory-only (simulation without persistence).
class LedgerStore {
 public:
  explicit LedgerStore(std::string data_dir = "")
      : data_dir_(std::move(data_dir)) {
    if (!data_dir_.empty())
      std::filesystem::create_directories(data_dir_ + "/channels");
  }

  // Loads and verifies every channel file on disk; throws on the first
  // corrupt one. Called at node startup.
  void open_all(const Registry& registry) {
    if (data_dir_.empty()) return;
    const std::string dir = data_dir_ + "/channels";
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      std::string stem = p.stem().string();
      auto sep = stem.find("__");
      if (sep == std::string::npos) continue;
      ChannelId channel(VaspId{stem.substr(0, sep)},
                        VaspId{stem.substr(sep + 2)});
      ledgers_.insert({channel, ChannelLedger::open(channel, p.string(),
                                                    registry)});
    }
  }

  ChannelLedger& get_or_create(const ChannelId& channel) {
    auto it = ledgers_.find(channel);
    if (it == ledgers_.end()) {
      std::string path = data_dir_.empty()
                             ? ""
                             : channel_file_path(data_dir_, channel);
      it = ledgers_.insert({channel, ChannelLedger(channel, path)}).first;
    }
    return it->second;
  }

  const ChannelLedger* find(const ChannelId& channel) const {
    auto it = ledgers_.find(channel);
    return it == ledgers_.end() ? nullptr : &it->second;
  }

  // Scans all channels for an entry by hash.
  std::optional<std::pair<ChannelId, LedgerEntry>> find_entry(
      const Digest& h) const {
    for (const auto& [channel, ledger] : ledgers_) {
      if (auto e = ledger.find_by_hash(h)) return std::pair{channel, *e};
    }
    return std::nullopt;
  }

  const std::map<ChannelId, ChannelLedger>& channels() const {
    return ledgers_;
  }

 private:
  std::string data_dir_;
  std::map<ChannelId, ChannelLedger> ledgers_;
};

}  // namespace travelrule
