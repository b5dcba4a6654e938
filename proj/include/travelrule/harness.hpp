#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "travelrule/node.hpp"

namespace travelrule {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioResult {
  bool ok = true;
  int checks = 0;
  int failures = 0;
  std::string transcript;  // JSON lines
};

// Deterministic multi-node scenario runner with fault injection. All faults
// are applied from outside the nodes: storage is tampered on disk, forged
// traffic is injected at the network layer, drops happen on the wire.
class ScenarioRunner {
 public:
  ScenarioRunner(json scenario, std::string out_dir,
                 std::optional<std::uint64_t> seed_override = std::nullopt)
      : scenario_(std::move(scenario)), out_dir_(std::move(out_dir)) {
    seed_ = seed_override.value_or(scenario_.value("seed", std::uint64_t{0}));
  }

  ScenarioResult run() {
    setup();
    for (const auto& action : scenario_.at("actions")) apply(action);
    result_.ok = result_.failures == 0;
    result_.transcript = transcript_.str();
    if (!out_dir_.empty()) {
      std::ofstream f(out_dir_ + "/transcript.jsonl", std::ios::trunc);
      f << result_.transcript;
    }
    return result_;
  }

 private:
  // ---- setup ------------------------------------------------------------

  static FixedBytes<32> derive_seed(const std::string& tag,
                                    std::uint64_t seed) {
    Digest d = sha256(tag + ":" + std::to_string(seed));
    FixedBytes<32> out;
    out.bytes = d.bytes;
    return out;
  }

  static std::uint64_t derive_u64(const std::string& tag, std::uint64_t seed) {
    Digest d = sha256(tag + ":" + std::to_string(seed));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[i];
    return v;
  }

  void setup() {
    if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);

    SimConfig sim;
    if (scenario_.contains("sim")) sim = scenario_.at("sim").get<SimConfig>();
    sim.seed = derive_u64("net", seed_);
    net_ = std::make_unique<SimNetwork>(sim);
    net_->set_observer([this](const json& e) { record(e); });

    authority_ = std::make_unique<KeyPair>(
        KeyPair::from_seed(derive_seed("authority", seed_)));
    registry_ = Registry(authority_->public_key());

    const std::int64_t epoch = clock_.now_seconds();
    chain_ = std::make_shared<MockChain>();

    // Address book: every customer address routes to the VASP whose backend
    // holds it.
    std::vector<AddressRoute> book;
    for (const auto& vj : scenario_.at("vasps")) {
      VaspId id{vj.at("id").get<std::string>()};
      for (const auto& cj : vj.value("customers", json::array())) {
        CustomerRecord c = cj.get<CustomerRecord>();
        for (const auto& a : c.addresses) book.push_back({a, id});
      }
    }

    // All credentials go in before any node copies the registry, otherwise
    // early nodes would drop messages from peers issued later.
    for (const auto& vj : scenario_.at("vasps")) {
      VaspId id{vj.at("id").get<std::string>()};
      KeyPair key = KeyPair::from_seed(derive_seed("vasp-key:" + id.value,
                                                   seed_));
      if (vj.value("credential", "active") == "expired") {
        registry_.issue(*authority_, id, key.public_key(), id.value,
                        epoch - 200 * 86400, 100);
      } else {
        registry_.issue(*authority_, id, key.public_key(), id.value, epoch,
                        365);
      }
    }

    for (const auto& vj : scenario_.at("vasps")) {
      VaspId id{vj.at("id").get<std::string>()};
      KeyPair key = KeyPair::from_seed(derive_seed("vasp-key:" + id.value,
                                                   seed_));
      const std::string cred_mode = vj.value("credential", "active");

      Node::Options o = Node::Options::make(id, std::move(key));
      if (!out_dir_.empty()) {
        o.data_dir = out_dir_ + "/" + id.value;
        std::filesystem::create_directories(o.data_dir);
      }
      o.backend = std::make_shared<JsonBackend>(
          vj.value("customers", json::array()));
      o.chain = chain_;
      for (const auto& n : vj.value("denylist", json::array()))
        o.denylist.push_back(n.get<std::string>());
      o.address_book = book;
      o.session_timeout_seconds =
          scenario_.value("session_timeout_seconds", std::int64_t{30});
      o.rng_seed = derive_u64("rng:" + id.value, seed_);
      o.clock = &clock_;
      o.send = [this, id](const VaspId& to, const Message& m) {
        net_->send(id, to, encode_frame(m));
      };
      o.observe = [this](const json& e) { record(e); };
      o.enforce_own_credential = cred_mode == "active";
      nodes_.emplace(id, std::make_unique<Node>(std::move(o), registry_));
      net_->register_node(id, [this, id](const std::string& frame) {
        nodes_.at(id)->on_frame(frame);
      });
    }
  }

  // ---- actions ----------------------------------------------------------

  // Action echoes go to the transcript; identity values must not.
  static json redact(json a) {
    if (a.contains("value")) a["value"] = "(redacted)";
    return a;
  }

  void apply(const json& a) {
    const std::string kind = a.at("action").get<std::string>();
    record({{"event", "action"}, {"action", redact(a)}});
    if (kind == "submit_transfer") return act_submit(a);
    if (kind == "flag_suspicious") return act_flag(a);
    if (kind == "advance_ticks") return advance(a.at("n").get<int>());
    if (kind == "run_until_idle") return run_until_idle(a.value("max_ticks", 200));
    if (kind == "tamper_ledger") return act_tamper(a);
    if (kind == "delete_entry") return act_delete(a);
    if (kind == "forge_message") return act_forge(a);
    if (kind == "replay_last")
      return (void)net_->replay_last(vasp(a, "from"), vasp(a, "to"));
    if (kind == "drop_next")
      return net_->drop_next(vasp(a, "from"), vasp(a, "to"));
    if (kind == "revoke") return act_revoke(a);
    if (kind == "stop_node") return net_->unregister_node(vasp(a, "vasp"));
    if (kind == "expect_session") return expect_session(a);
    if (kind == "expect_addinfo") return expect_addinfo(a);
    if (kind == "expect_replicas_identical") return expect_identical(a);
    if (kind == "expect_verify") return expect_verify(a);
    if (kind == "expect_session_count") return expect_session_count(a);
    if (kind == "expect_real_name") return expect_real_name(a);
    if (kind == "expect_ledger_len") return expect_ledger_len(a);
    if (kind == "expect_addinfo_record") return expect_addinfo_record(a);
    throw ScenarioError("unknown action: " + kind);
  }

  void advance(int n) {
    for (int i = 0; i < n; ++i) {
      clock_.advance();
      net_->step();
      for (auto& [id, node] : nodes_) node->tick();
    }
  }

  void run_until_idle(int max_ticks) {
    for (int i = 0; i < max_ticks && !net_->idle(); ++i) advance(1);
  }

  void act_submit(const json& a) {
    Node& n = node(a, "vasp");
    const bool expect_error = a.value("expect_error", false);
    try {
      std::string sid = n.submit_transfer(
          a.at("customer_id").get<std::string>(),
          a.at("beneficiary_address").get<VirtualAssetAddress>(),
          a.at("asset").get<std::string>(), a.at("amount").get<std::string>());
      if (a.contains("label"))
        labels_[a.at("label").get<std::string>()] = {n.vasp_id(), sid};
      check(!expect_error, a, "submitted");
    } catch (const std::exception& e) {
      check(expect_error, a, e.what());
    }
  }

  void act_flag(const json& a) {
    Node& n = node(a, "vasp");
    const bool expect_error = a.value("expect_error", false);
    try {
      Digest ref = record_hash(n, a.at("record_of").get<std::string>());
      std::string rid = n.flag_suspicious(
          ref, reason_code_from_string(a.value("reason", "STR")));
      if (a.contains("label"))
        labels_[a.at("label").get<std::string>()] = {n.vasp_id(), rid};
      check(!expect_error, a, "flagged");
    } catch (const std::exception& e) {
      check(expect_error, a, e.what());
    }
  }

  void act_tamper(const json& a) {
    const std::string path = channel_path(a);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("tamper: no such file " + path);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    std::size_t off = a.at("byte_offset").get<std::size_t>();
    if (a.contains("seq")) {
      // offset relative to the start of the given entry's line
      std::size_t line_start = 0;
      for (std::uint64_t i = 0; i < a.at("seq").get<std::uint64_t>(); ++i)
        line_start = data.find('\n', line_start) + 1;
      off += line_start;
    }
    if (off >= data.size()) throw ScenarioError("tamper: offset out of range");
    data[off] = static_cast<char>(data[off] ^ a.value("xor", 0x01));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << data;
  }

  void act_delete(const json& a) {
    const std::string path = channel_path(a);
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    const std::uint64_t seq = a.at("seq").get<std::uint64_t>();
    if (seq >= lines.size()) throw ScenarioError("delete: seq out of range");
    lines.erase(lines.begin() + seq);
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
  }

  void act_forge(const json& a) {
    // Forged traffic from outside the membership: a key the authority never
    // admitted, optionally claiming a registered sender id.
    KeyPair attacker = KeyPair::from_seed(derive_seed("forge", seed_));
    VaspId sender{a.value("sender", "mallory-ex")};
    MsgType kind = msg_type_from_string(a.value("kind", "TRANSFER_INIT"));
    json body;
    if (kind == MsgType::TRANSFER_INIT) {
      body = json(TransferInitBody{
          PartyInfo{"Mallory", {"BTC", "bc1mallory"}},
          a.contains("beneficiary_address")
              ? a.at("beneficiary_address").get<VirtualAssetAddress>()
              : VirtualAssetAddress{"BTC", "bc1forged"},
          "BTC", "1"});
    } else if (kind == MsgType::ADDINFO_REQUEST) {
      body = json(AddInfoRequestBody{Digest::zero(), ReasonCode::OTHER});
    } else {
      body = json(TransferRejectBody{"forged"});
    }
    std::string sid = a.value("session_id", std::string(32, 'f'));
    Message m = make_message(kind, sid, sender,
                             format_rfc3339(clock_.now_seconds()), body,
                             attacker);
    net_->send(sender, vasp(a, "to"), encode_frame(m));
  }

  void act_revoke(const json& a) {
    registry_.revoke(vasp(a, "vasp"));
    // next registry refresh on every node
    for (auto& [id, n] : nodes_) n->set_registry(registry_);
    record({{"event", "registry_refresh"}, {"revoked", a.at("vasp")}});
  }

  // ---- expectations -----------------------------------------------------

  void expect_session(const json& a) {
    const auto& [vid, sid] = label(a.at("label").get<std::string>());
    Node& n = a.contains("vasp") ? node(a, "vasp") : *nodes_.at(vid);
    const auto* s = n.engine().find_transfer(sid);
    if (!s) return check(false, a, "session not found");
    check(to_string(s->state) == a.at("state").get<std::string>(), a,
          to_string(s->state));
  }

  void expect_addinfo(const json& a) {
    const auto& [vid, sid] = label(a.at("label").get<std::string>());
    Node& n = a.contains("vasp") ? node(a, "vasp") : *nodes_.at(vid);
    const auto* s = n.engine().find_addinfo(sid);
    if (!s) return check(false, a, "request not found");
    check(to_string(s->state) == a.at("state").get<std::string>(), a,
          to_string(s->state));
  }

  void expect_identical(const json& a) {
    ChannelId channel = a.at("channel").get<ChannelId>();
    const auto* la = nodes_.at(channel.first)->ledgers().find(channel);
    const auto* lb = nodes_.at(channel.second)->ledgers().find(channel);
    if (!la || !lb) return check(false, a, "channel missing on a replica");
    auto report = diff_replicas(la->entries(), lb->entries());
    check(report.identical, a,
          report.identical
              ? "identical"
              : "diverge at " + std::to_string(report.first_divergent_seq));
  }

  void expect_verify(const json& a) {
    ChainReport report = verify_channel_file(channel_path(a), registry_);
    const bool want_ok = a.at("ok").get<bool>();
    bool pass = report.ok == want_ok;
    if (!want_ok && pass && a.contains("max_bad_index"))
      pass = report.bad_index <= a.at("max_bad_index").get<std::uint64_t>();
    check(pass, a,
          report.ok ? "chain ok"
                    : "bad index " + std::to_string(report.bad_index) + ": " +
                          report.reason);
  }

  void expect_session_count(const json& a) {
    Node& n = node(a, "vasp");
    check(n.engine().transfer_session_count() ==
              a.at("transfers").get<std::size_t>(),
          a, std::to_string(n.engine().transfer_session_count()));
  }

  void expect_real_name(const json& a) {
    const auto& [vid, rid] = label(a.at("label").get<std::string>());
    Node& n = *nodes_.at(vid);
    auto info = n.get_additional_info(rid);
    if (!info) return check(false, a, "no real name info available");
    bool pass = to_string(info->kind) == a.at("kind").get<std::string>();
    if (a.contains("value")) pass = pass && info->value == a.at("value");
    check(pass, a, to_string(info->kind));
  }

  void expect_ledger_len(const json& a) {
    Node& n = node(a, "vasp");
    ChannelId channel = a.at("channel").get<ChannelId>();
    const auto* l = n.ledgers().find(channel);
    std::size_t len = l ? l->entries().size() : 0;
    check(len == a.at("len").get<std::size_t>(), a, std::to_string(len));
  }

  void expect_addinfo_record(const json& a) {
    Node& n = node(a, "vasp");
    ChannelId channel = a.at("channel").get<ChannelId>();
    const auto* l = n.ledgers().find(channel);
    if (!l || l->entries().empty()) return check(false, a, "empty channel");
    const auto& last = l->entries().back();
    const auto* add = std::get_if<AdditionalInfoRecord>(&last.payload);
    if (!add) return check(false, a, "last entry is not additional info");
    Digest want = record_hash(n, a.at("record_of").get<std::string>());
    check(add->ref_entry == want, a, "ref_entry match");
  }

  // ---- helpers ----------------------------------------------------------

  VaspId vasp(const json& a, const char* field) const {
    return VaspId{a.at(field).get<std::string>()};
  }
  Node& node(const json& a, const char* field) {
    return *nodes_.at(vasp(a, field));
  }
  const std::pair<VaspId, std::string>& label(const std::string& name) const {
    auto it = labels_.find(name);
    if (it == labels_.end()) throw ScenarioError("unknown label: " + name);
    return it->second;
  }

  // entry_hash of the TravelRuleRecord finalized for the labeled transfer,
  // looked up on the given node's replica.
  Digest record_hash(Node& n, const std::string& label_name) {
    const auto& [vid, sid] = label(label_name);
    for (const auto& [channel, ledger] : n.ledgers().channels())
      for (const auto& e : ledger.entries())
        if (const auto* r = std::get_if<TravelRuleRecord>(&e.payload))
          if (r->session_id == sid) return e.entry_hash;
    throw ScenarioError("no finalized record for label " + label_name);
  }

  std::string channel_path(const json& a) const {
    ChannelId channel = a.at("channel").get<ChannelId>();
    return channel_file_path(out_dir_ + "/" +
                                 a.at("vasp").get<std::string>(),
                             channel);
  }

  void check(bool ok, const json& action, const std::string& detail) {
    ++result_.checks;
    if (!ok) ++result_.failures;
    record({{"event", "expect"},
            {"ok", ok},
            {"action", redact(action)},
            {"detail", detail}});
  }

  void record(json event) {
    event["at"] = clock_.tick();
    transcript_ << canonical_bytes(event) << "\n";
  }

  json scenario_;
  std::string out_dir_;
  std::uint64_t seed_ = 0;
  SimClock clock_;
  std::unique_ptr<SimNetwork> net_;
  std::unique_ptr<KeyPair> authority_;
  Registry registry_;
  std::shared_ptr<MockChain> chain_;
  std::map<VaspId, std::unique_ptr<Node>> nodes_;
  std::map<std::string, std::pair<VaspId, std::string>> labels_;
  std::ostringstream transcript_;
  ScenarioResult result_;
};

inline ScenarioResult run_scenario_file(
    const std::string& path, const std::string& out_dir,
    std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream f(path);
  if (!f) throw ScenarioError("cannot read scenario: " + path);
  json scenario = json::parse(f);
  ScenarioRunner runner(std::move(scenario), out_dir, seed_override);
  return runner.run();
}

}  // namespace travelrule
