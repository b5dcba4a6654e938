#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "travelrule/backend.hpp"
#include "travelrule/ledger.hpp"
#include "travelrule/membership.hpp"
#include "travelrule/protocol.hpp"

namespace trtest {

namespace tr = travelrule;

inline tr::FixedBytes<32> seed_bytes(std::uint8_t tag) {
  tr::FixedBytes<32> s;
  s.bytes.fill(tag);
  return s;
}

inline std::string fresh_dir(const std::string& hint) {
  static std::uint64_t counter = 0;
  std::string path = (std::filesystem::temp_directory_path() /
                      ("trtest-" + hint + "-" + std::to_string(::getpid()) +
                       "-" + std::to_string(counter++)))
                         .string();
  std::filesystem::create_directories(path);
  return path;
}

inline tr::CustomerRecord alice() {
  return {"c-alice",
          "Alice Kim",
          {{"BTC", "bc1alice"}},
          {tr::RealNameKind::RESIDENT_REGISTRATION, "900101-1234567"}};
}
inline tr::CustomerRecord bob() {
  return {"c-bob",
          "Bob Lee",
          {{"BTC", "bc1bob"}},
          {tr::RealNameKind::PASSPORT, "M12345678"}};
}

struct Wire {
  tr::VaspId from;
  tr::VaspId to;
  tr::Message msg;
};

// Two protocol engines joined by an inspectable in-memory mailbox. Messages
// sit in the queue until the test delivers them, so any point of the
// exchange can be paused, inspected, or tampered with.
struct TwoVasps {
  tr::SimClock clock;
  tr::KeyPair authority = tr::KeyPair::from_seed(seed_bytes(1));
  tr::KeyPair key_a = tr::KeyPair::from_seed(seed_bytes(2));
  tr::KeyPair key_b = tr::KeyPair::from_seed(seed_bytes(3));
  tr::Registry registry{authority.public_key()};
  std::shared_ptr<tr::MockChain> chain = std::make_shared<tr::MockChain>();
  tr::JsonBackend backend_a{tr::json::array({alice()})};
  tr::JsonBackend backend_b{tr::json::array({bob()})};
  tr::LedgerStore ledgers_a{""};
  tr::LedgerStore ledgers_b{""};
  std::deque<Wire> wires;
  std::vector<tr::json> events;
  std::unique_ptr<tr::ProtocolEngine> a;
  std::unique_ptr<tr::ProtocolEngine> b;

  tr::VaspId ida{"alpha-ex"};
  tr::VaspId idb{"beta-ex"};

  explicit TwoVasps(std::vector<std::string> denylist_b = {}) {
    const std::int64_t now = clock.now_seconds();
    registry.issue(authority, ida, key_a.public_key(), "Alpha", now, 365);
    registry.issue(authority, idb, key_b.public_key(), "Beta", now, 365);
    a = make_engine(ida, key_a, &backend_a, &ledgers_a, {});
    b = make_engine(idb, key_b, &backend_b, &ledgers_b,
                    std::move(denylist_b));
  }

  std::unique_ptr<tr::ProtocolEngine> make_engine(
      const tr::VaspId& self, const tr::KeyPair& key,
      tr::BackendAdapter* backend, tr::LedgerStore* ledgers,
      std::vector<std::string> denylist) {
    tr::ProtocolEngine::Deps d;
    d.self = self;
    d.key = &key;
    d.registry = [this]() -> const tr::Registry& { return registry; };
    d.clock = &clock;
    d.backend = backend;
    d.chain = chain.get();
    d.ledgers = ledgers;
    d.route = [this](const tr::VirtualAssetAddress& addr)
        -> std::optional<tr::VaspId> {
      if (addr.address == "bc1alice") return ida;
      if (addr.address == "bc1bob") return idb;
      return std::nullopt;
    };
    d.send = [this, self](const tr::VaspId& to, const tr::Message& m) {
      wires.push_back({self, to, m});
    };
    d.observe = [this](const tr::json& e) { events.push_back(e); };
    d.denylist = std::move(denylist);
    d.session_timeout_seconds = 30;
    d.rng_seed = self.value == "alpha-ex" ? 11 : 22;
    return std::make_unique<tr::ProtocolEngine>(std::move(d));
  }

  tr::ProtocolEngine& engine_of(const tr::VaspId& id) {
    return id == ida ? *a : *b;
  }

  bool deliver_one() {
    if (wires.empty()) return false;
    Wire w = wires.front();
    wires.pop_front();
    engine_of(w.to).handle_message(w.msg);
    return true;
  }

  int deliver_all(int limit = 200) {
    int n = 0;
    while (n < limit && deliver_one()) ++n;
    return n;
  }

  // Runs one full happy-path transfer Alice -> Bob; returns the session id.
  std::string run_happy_transfer(const std::string& amount = "0.5") {
    std::string sid = a->initiate_transfer(
        {"Alice Kim", {"BTC", "bc1alice"}}, {"BTC", "bc1bob"}, "BTC", amount);
    deliver_all();
    return sid;
  }
};

}  // namespace trtest
