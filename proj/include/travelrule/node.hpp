#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "travelrule/backend.hpp"
#include "travelrule/ledger.hpp"
#include "travelrule/membership.hpp"
#include "travelrule/protocol.hpp"
#include "travelrule/transport.hpp"

namespace travelrule {

struct NodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AddressRoute {
  VirtualAssetAddress address;
  VaspId vasp;
};
inline void to_json(json& j, const AddressRoute& r) {
  j = json{{"address", r.address}, {"vasp", r.vasp}};
}
inline void from_json(const json& j, AddressRoute& r) {
  j.at("address").get_to(r.address);
  j.at("vasp").get_to(r.vasp);
}

struct NodeConfig {
  VaspId vasp_id;
  std::string key_file;
  std::string data_dir;
  std::string listen_address;  // host:port
  int ops_port = 0;            // loopback operations socket
  std::map<VaspId, std::string> peers;  // static peer table
  std::string registry_path;
  int registry_refresh_seconds = 60;
  std::int64_t session_timeout_seconds = 30;
  std::string denylist_path;  // one name per line; optional
  std::string backend_path;   // backend.json fixture
  std::string mock_chain_path;
  std::vector<AddressRoute> address_book;
};

inline void from_json(const json& j, NodeConfig& c) {
  j.at("vasp_id").get_to(c.vasp_id);
  j.at("key_file").get_to(c.key_file);
  j.at("data_dir").get_to(c.data_dir);
  c.listen_address = j.value("listen_address", "");
  c.ops_port = j.value("ops_port", 0);
  if (j.contains("peers"))
    for (const auto& [id, addr] : j.at("peers").items())
      c.peers[VaspId{id}] = addr.get<std::string>();
  j.at("registry_path").get_to(c.registry_path);
  c.registry_refresh_seconds = j.value("registry_refresh_seconds", 60);
  c.session_timeout_seconds =
      j.value("session_timeout_seconds", std::int64_t{30});
  c.denylist_path = j.value("denylist_path", "");
  j.at("backend_path").get_to(c.backend_path);
  c.mock_chain_path = j.value("mock_chain_path", "");
  if (j.contains("address_book"))
    j.at("address_book").get_to(c.address_book);
}

inline NodeConfig load_node_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw NodeError("cannot read config: " + path);
  NodeConfig c = json::parse(f).get<NodeConfig>();
  if (c.peers.contains(c.vasp_id))
    throw NodeError("peer table must not include the node itself");
  return c;
}

inline std::vector<std::string> load_denylist(const std::string& path) {
  std::vector<std::string> out;
  if (path.empty()) return out;
  std::ifstream f(path);
  if (!f) throw NodeError("cannot read denylist: " + path);
  std::string line;
  while (std::getline(f, line)) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// The per-VASP service core: registry + ledgers + backend + protocol engine,
// with transport injected as a send callback. Not thread safe by itself;
// the TCP server serializes calls, the simulator is single threaded.
class Node {
 public:
  struct Options {
    VaspId vasp_id;
    KeyPair key;
    std::string data_dir;  // empty: memory only
    std::shared_ptr<BackendAdapter> backend;
    std::shared_ptr<MockChain> chain;
    std::vector<std::string> denylist;
    std::vector<AddressRoute> address_book;
    std::int64_t session_timeout_seconds = 30;
    std::uint64_t rng_seed = 0;
    const Clock* clock = nullptr;
    std::function<void(const VaspId&, const Message&)> send;
    std::function<void(const json&)> observe;
    // Harness scenarios exercising expired credentials need the node up
    // despite its own credential failing verification.
    bool enforce_own_credential = true;

    static Options make(VaspId id, KeyPair key) {
      return Options{.vasp_id = std::move(id), .key = std::move(key)};
    }
  };

  Node(Options opts, Registry registry)
      : opts_(std::move(opts)),
        registry_(std::move(registry)),
        ledgers_(opts_.data_dir) {
    auto cred = registry_.credential_of(opts_.vasp_id);
    if (!cred)
      throw NodeError("no credential in registry for " + opts_.vasp_id.value);
    if (opts_.enforce_own_credential &&
        !registry_.verify_credential(*cred, opts_.clock->now_seconds()))
      throw NodeError("own credential does not verify (revoked or expired)");
    if (cred->public_key != opts_.key.public_key())
      throw NodeError("key file does not match registered credential");

    // Refuse to start over tampered history.
    ledgers_.open_all(registry_);

    ProtocolEngine::Deps deps;
    deps.self = opts_.vasp_id;
    deps.key = &opts_.key;
    deps.registry = [this]() -> const Registry& { return registry_; };
    deps.clock = opts_.clock;
    deps.backend = opts_.backend.get();
    deps.chain = opts_.chain.get();
    deps.ledgers = &ledgers_;
    deps.route = [this](const VirtualAssetAddress& a) {
      return route(a);
    };
    deps.send = opts_.send;
    deps.observe = opts_.observe;
    deps.denylist = opts_.denylist;
    deps.session_timeout_seconds = opts_.session_timeout_seconds;
    deps.rng_seed = opts_.rng_seed;
    engine_ = std::make_unique<ProtocolEngine>(std::move(deps));
  }

  static Node from_config(const NodeConfig& config, const Clock* clock,
                          std::function<void(const VaspId&, const Message&)> send,
                          std::function<void(const json&)> observe = {}) {
    Options o = Options::make(config.vasp_id, load_key_file(config.key_file));
    o.data_dir = config.data_dir;
    o.backend =
        std::make_shared<JsonBackend>(JsonBackend::from_file(config.backend_path));
    o.chain = std::make_shared<MockChain>(
        config.mock_chain_path.empty() ? MockChain()
                                       : MockChain(config.mock_chain_path));
    o.denylist = load_denylist(config.denylist_path);
    o.address_book = config.address_book;
    o.session_timeout_seconds = config.session_timeout_seconds;
    o.clock = clock;
    o.send = std::move(send);
    o.observe = std::move(observe);
    std::random_device rd;
    o.rng_seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    return Node(std::move(o), Registry::load(config.registry_path));
  }

  const VaspId& vasp_id() const { return opts_.vasp_id; }
  ProtocolEngine& engine() { return *engine_; }
  LedgerStore& ledgers() { return ledgers_; }
  const Registry& registry() const { return registry_; }
  BackendAdapter& backend() { return *opts_.backend; }

  void set_registry(Registry r) { registry_ = std::move(r); }
  void reload_registry(const std::string& path) {
    registry_ = Registry::load(path);
  }

  // Inbound wire bytes (one frame). Undecodable frames are dropped.
  void on_frame(const std::string& frame) {
    Message m;
    try {
      m = decode_frame(frame);
    } catch (const FrameDecodeError& e) {
      if (opts_.observe)
        opts_.observe({{"event", "drop_frame"},
                       {"vasp", opts_.vasp_id},
                       {"reason", e.what()}});
      return;
    }
    engine_->handle_message(m);
  }

  void tick() { engine_->tick(); }

  std::string submit_transfer(const std::string& customer_id,
                              const VirtualAssetAddress& beneficiary_address,
                              const std::string& asset,
                              const std::string& amount) {
    auto customer = opts_.backend->lookup_customer_by_id(customer_id);
    if (!customer) throw NodeError("unknown customer: " + customer_id);
    const VirtualAssetAddress* own = nullptr;
    for (const auto& a : customer->addresses)
      if (a.asset == asset) own = &a;
    if (own == nullptr)
      throw NodeError("customer holds no address for asset " + asset);
    PartyInfo originator{customer->name, *own};
    return engine_->initiate_transfer(originator, beneficiary_address, asset,
                                      amount);
  }

  json get_session_status(const std::string& session_id) const {
    return engine_->session_status(session_id);
  }

  std::string flag_suspicious(const Digest& entry_hash, ReasonCode reason) {
    return engine_->request_additional_info(entry_hash, reason);
  }

  std::optional<RealNameInfo> get_additional_info(
      const std::string& request_id) const {
    const auto* s = engine_->find_addinfo(request_id);
    if (!s) throw NodeError("unknown request: " + request_id);
    if (s->state != AddInfoState::COMPLETE) return std::nullopt;
    return s->real_name;
  }

 private:
  std::optional<VaspId> route(const VirtualAssetAddress& a) const {
    for (const auto& r : opts_.address_book)
      if (r.address == a) return r.vasp;
    return std::nullopt;
  }

  Options opts_;
  Registry registry_;
  LedgerStore ledgers_;
  std::unique_ptr<ProtocolEngine> engine_;
};

}  // namespace travelrule
