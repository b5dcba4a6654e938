// Acceptance suite: one line of output per criterion, nonzero exit if any
// fails. Independent of the unit test framework on purpose.

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "travelrule/harness.hpp"
#include "test_util.hpp"

namespace tr = travelrule;

namespace {

int g_failures = 0;

void report(int n, const std::string& what, bool ok,
            const std::string& detail = "") {
  std::printf("criterion %2d: %-58s %s%s%s\n", n, what.c_str(),
              ok ? "PASS" : "FAIL", detail.empty() ? "" : " -- ",
              detail.c_str());
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

tr::json customer_json(const tr::CustomerRecord& c) { return tr::json(c); }

tr::json three_vasp_block() {
  tr::CustomerRecord carol{
      "c-carol",
      "Carol Choi",
      {{"BTC", "bc1carol"}},
      {tr::RealNameKind::ALIEN_REGISTRATION, "850505-5678901"}};
  return tr::json::array(
      {tr::json{{"id", "alpha-ex"},
                {"customers", tr::json::array({customer_json(trtest::alice())})}},
       tr::json{{"id", "beta-ex"},
                {"customers", tr::json::array({customer_json(trtest::bob())})}},
       tr::json{{"id", "gamma-ex"},
                {"customers", tr::json::array({customer_json(carol)})}}});
}

std::vector<std::string> shipped_scenarios() {
  std::vector<std::string> out;
  for (const auto& e :
       std::filesystem::directory_iterator(TR_SCENARIO_DIR))
    if (e.path().extension() == ".json") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- criterion 1: 20 transfers across 3 VASPs -----------------------------

void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  tr::json scenario{{"seed", 100}, {"vasps", three_vasp_block()}};
  tr::json actions = tr::json::array();
  const char* origin[] = {"alpha-ex", "beta-ex", "gamma-ex"};
  const char* customer[] = {"c-alice", "c-bob", "c-carol"};
  const char* dest[] = {"bc1bob", "bc1carol", "bc1alice"};
  const char* peer[] = {"beta-ex", "gamma-ex", "alpha-ex"};
  for (int i = 0; i < 20; ++i) {
    int k = i % 3;
    std::string label = "t" + std::to_string(i);
    actions.push_back({{"action", "submit_transfer"},
                       {"vasp", origin[k]},
                       {"customer_id", customer[k]},
                       {"beneficiary_address",
                        tr::json{{"asset", "BTC"}, {"address", dest[k]}}},
                       {"asset", "BTC"},
                       {"amount", std::to_string(i + 1) + ".5"},
                       {"label", label}});
    actions.push_back({{"action", "run_until_idle"}});
    actions.push_back({{"action", "expect_session"},
                       {"label", label},
                       {"state", "COMPLETE"}});
    actions.push_back({{"action", "expect_session"},
                       {"label", label},
                       {"vasp", peer[k]},
                       {"state", "COMPLETE"}});
  }
  for (const auto& pair :
       {std::pair{"alpha-ex", "beta-ex"}, {"beta-ex", "gamma-ex"},
        {"alpha-ex", "gamma-ex"}}) {
    tr::json channel = tr::json::array({pair.first, pair.second});
    actions.push_back(
        {{"action", "expect_replicas_identical"}, {"channel", channel}});
    actions.push_back({{"action", "expect_verify"},
                       {"vasp", pair.first},
                       {"channel", channel},
                       {"ok", true}});
    actions.push_back({{"action", "expect_verify"},
                       {"vasp", pair.second},
                       {"channel", channel},
                       {"ok", true}});
  }
  scenario["actions"] = actions;
  tr::ScenarioRunner runner(scenario, trtest::fresh_dir("acc1"));
  tr::ScenarioResult r = runner.run();
  double dt = seconds_since(t0);
  report(1, "20 transfers, 3 VASPs: COMPLETE, verified, identical",
         r.ok && r.failures == 0 && dt < 10.0,
         std::to_string(r.checks - r.failures) + "/" +
             std::to_string(r.checks) + " checks, " + std::to_string(dt) +
             "s");
}

// ---- criterion 2: Step 2 round trip ---------------------------------------

void criterion_2() {
  auto t0 = std::chrono::steady_clock::now();
  tr::ScenarioResult r = tr::run_scenario_file(
      std::string(TR_SCENARIO_DIR) + "/addinfo_str.json",
      trtest::fresh_dir("acc2"));
  double dt = seconds_since(t0);
  report(2, "flagged record yields chained real-name disclosure",
         r.ok && dt < 5.0,
         std::to_string(r.checks - r.failures) + "/" +
             std::to_string(r.checks) + " checks, " + std::to_string(dt) +
             "s");
}

// ---- criterion 3: exhaustive single-byte tamper sweep ---------------------

void criterion_3() {
  constexpr std::int64_t kNow = 1640995200;
  tr::KeyPair authority = tr::KeyPair::from_seed(trtest::seed_bytes(1));
  tr::KeyPair key_a = tr::KeyPair::from_seed(trtest::seed_bytes(2));
  tr::KeyPair key_b = tr::KeyPair::from_seed(trtest::seed_bytes(3));
  tr::Registry registry(authority.public_key());
  tr::VaspId ida{"alpha-ex"}, idb{"beta-ex"};
  registry.issue(authority, ida, key_a.public_key(), "Alpha", kNow, 365);
  registry.issue(authority, idb, key_b.public_key(), "Beta", kNow, 365);
  tr::ChannelId channel(ida, idb);

  std::string dir = trtest::fresh_dir("acc3");
  std::filesystem::create_directories(dir + "/channels");
  std::string path = tr::channel_file_path(dir, channel);
  {
    tr::ChannelLedger la(channel, path), lb(channel);
    auto exchange = [&](const tr::EntryPayload& payload) {
      tr::ProposedEntry p =
          la.propose(payload, ida, key_a, tr::format_rfc3339(kNow));
      tr::LedgerEntry e = lb.countersign(p, idb, key_b, registry, kNow);
      la.finalize_as_proposer(p, e.acceptor_sig, registry, kNow);
      return e;
    };
    tr::LedgerEntry first{};
    for (int i = 0; i < 4; ++i) {
      tr::TravelRuleRecord rec{std::string(32, static_cast<char>('a' + i)),
                               {"Alice Kim", {"BTC", "bc1alice"}},
                               {"Bob Lee", {"BTC", "bc1bob"}},
                               {"tx-" + std::to_string(i), "BTC", "0.5",
                                {"BTC", "bc1alice"},
                                {"BTC", "bc1bob"},
                                tr::format_rfc3339(kNow + i)}};
      tr::LedgerEntry e = exchange(rec);
      if (i == 0) first = e;
    }
    exchange(tr::AdditionalInfoRecord{
        std::string(32, 'z'), first.entry_hash, tr::ReasonCode::STR,
        {tr::RealNameKind::PASSPORT, "M12345678"}});
  }

  std::string original;
  {
    std::ifstream in(path, std::ios::binary);
    original.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (!tr::verify_channel_file(path, registry).ok) {
    report(3, "single-byte tamper sweep over a 5-entry chain", false,
           "pristine file failed to verify");
    return;
  }

  std::size_t misses = 0, late = 0;
  for (std::size_t off = 0; off < original.size(); ++off) {
    std::string mutated = original;
    mutated[off] = static_cast<char>(mutated[off] ^ 0x01);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << mutated;
    }
    tr::ChainReport r = tr::verify_channel_file(path, registry);
    if (r.ok) {
      ++misses;
      continue;
    }
    std::size_t entry_index = static_cast<std::size_t>(
        std::count(original.begin(), original.begin() + off, '\n'));
    if (r.bad_index > entry_index) ++late;
  }
  report(3, "single-byte tamper sweep over a 5-entry chain",
         misses == 0 && late == 0,
         std::to_string(original.size()) + " corruptions, " +
             std::to_string(misses) + " missed, " + std::to_string(late) +
             " misattributed");
}

// ---- criterion 4: 2-of-2 consent ------------------------------------------

void criterion_4() {
  constexpr std::int64_t kNow = 1640995200;
  tr::KeyPair authority = tr::KeyPair::from_seed(trtest::seed_bytes(1));
  tr::KeyPair key_a = tr::KeyPair::from_seed(trtest::seed_bytes(2));
  tr::KeyPair key_b = tr::KeyPair::from_seed(trtest::seed_bytes(3));
  tr::Registry registry(authority.public_key());
  tr::VaspId ida{"alpha-ex"}, idb{"beta-ex"};
  registry.issue(authority, ida, key_a.public_key(), "Alpha", kNow, 365);
  registry.issue(authority, idb, key_b.public_key(), "Beta", kNow, 365);
  tr::ChannelId channel(ida, idb);
  tr::ChannelLedger la(channel);

  tr::TravelRuleRecord rec{std::string(32, 'a'),
                           {"Alice Kim", {"BTC", "bc1alice"}},
                           {"Bob Lee", {"BTC", "bc1bob"}},
                           {"tx-0", "BTC", "0.5",
                            {"BTC", "bc1alice"},
                            {"BTC", "bc1bob"},
                            tr::format_rfc3339(kNow)}};
  tr::ProposedEntry p = la.propose(rec, ida, key_a, tr::format_rfc3339(kNow));

  int accepted = 0;
  std::mt19937_64 rng(404);
  for (int i = 0; i < 100; ++i) {
    tr::FixedBytes<32> seed;
    for (auto& b : seed.bytes)
      b = static_cast<std::uint8_t>(rng());
    tr::KeyPair impostor = tr::KeyPair::from_seed(seed);
    tr::LedgerEntry e;
    e.channel = p.channel;
    e.seq = p.seq;
    e.prev_hash = p.prev_hash;
    e.payload = p.payload;
    e.created_at = p.created_at;
    e.proposer = p.proposer;
    e.proposer_sig = p.proposer_sig;
    e.acceptor_sig = impostor.sign(p.signing_digest().bytes);
    e.entry_hash = e.compute_entry_hash();
    if (tr::verify_entry(e, registry)) ++accepted;
  }
  // self-countersigning with the proposer's own key must also fail
  tr::LedgerEntry self_signed;
  self_signed.channel = p.channel;
  self_signed.seq = p.seq;
  self_signed.prev_hash = p.prev_hash;
  self_signed.payload = p.payload;
  self_signed.created_at = p.created_at;
  self_signed.proposer = p.proposer;
  self_signed.proposer_sig = p.proposer_sig;
  self_signed.acceptor_sig = key_a.sign(p.signing_digest().bytes);
  self_signed.entry_hash = self_signed.compute_entry_hash();
  if (tr::verify_entry(self_signed, registry)) ++accepted;
  // and the genuine countersignature passes, proving the check is live
  tr::LedgerEntry genuine = self_signed;
  genuine.acceptor_sig = key_b.sign(p.signing_digest().bytes);
  genuine.entry_hash = genuine.compute_entry_hash();
  bool live = tr::verify_entry(genuine, registry);
  report(4, "entries without counterparty consent never verify",
         accepted == 0 && live,
         std::to_string(accepted) + "/101 forgeries accepted");
}

// ---- criterion 5: permissioning -------------------------------------------

void criterion_5() {
  bool ok = true;
  std::string detail;
  for (const char* name :
       {"forged_identity", "expired_credential", "revoked_credential"}) {
    tr::ScenarioResult r = tr::run_scenario_file(
        std::string(TR_SCENARIO_DIR) + "/" + name + ".json",
        trtest::fresh_dir(name));
    if (!r.ok) {
      ok = false;
      detail += std::string(name) + " failed; ";
    }
  }
  report(5, "unregistered/expired/revoked senders create no session", ok,
         detail);
}

// ---- criterion 6: abnormal originator branch ------------------------------

void criterion_6() {
  tr::ScenarioResult r = tr::run_scenario_file(
      std::string(TR_SCENARIO_DIR) + "/denylisted_originator.json",
      trtest::fresh_dir("acc6"));
  // the session state name AWAIT_BENEFICIARY_INFO is fine; a sent or
  // delivered message of that type is not
  bool no_leak =
      r.transcript.find("\"type\":\"BENEFICIARY_INFO\"") == std::string::npos;
  report(6, "denylisted originator: REJECTED, no beneficiary data sent",
         r.ok && no_leak, no_leak ? "" : "BENEFICIARY_INFO found");
}

// ---- criterion 7: transaction confirmation --------------------------------

void criterion_7() {
  int failures = 0;
  auto run_with_mutation =
      [&](const char* what,
          const std::function<void(tr::TransactionInfo&)>& mutate) {
        trtest::TwoVasps t;
        std::string sid = t.a->initiate_transfer(
            {"Alice Kim", {"BTC", "bc1alice"}}, {"BTC", "bc1bob"}, "BTC",
            "0.5");
        t.deliver_one();
        t.deliver_one();
        if (t.wires.empty() ||
            t.wires.front().msg.msg_type != tr::MsgType::TX_INFO) {
          ++failures;
          return;
        }
        auto body = t.wires.front().msg.body_as<tr::TxInfoBody>();
        t.wires.pop_front();
        mutate(body.tx);
        tr::Message forged = tr::make_message(
            tr::MsgType::TX_INFO, sid, t.ida,
            tr::format_rfc3339(t.clock.now_seconds()), tr::json(body),
            t.key_a);
        t.b->handle_message(forged);
        t.deliver_all();
        bool abnormal = false;
        for (const auto& e : t.events)
          if (e.value("event", "") == "tx_check" &&
              e.value("result", "") == "ABNORMAL")
            abnormal = true;
        const bool aborted =
            t.b->find_transfer(sid)->state == tr::SessionState::ABORTED &&
            t.a->find_transfer(sid)->state == tr::SessionState::ABORTED;
        const bool no_entry =
            t.ledgers_a.channels().empty() && t.ledgers_b.channels().empty();
        if (!(abnormal && aborted && no_entry)) {
          ++failures;
          std::printf("  field %s escaped detection\n", what);
        }
      };
  run_with_mutation("amount",
                    [](tr::TransactionInfo& tx) { tx.amount = "0.6"; });
  run_with_mutation("asset", [](tr::TransactionInfo& tx) { tx.asset = "ETH"; });
  run_with_mutation("tx_id",
                    [](tr::TransactionInfo& tx) { tx.tx_id[0] ^= 0x01; });
  run_with_mutation("originator_address", [](tr::TransactionInfo& tx) {
    tx.originator_address.address += "x";
  });
  run_with_mutation("beneficiary_address", [](tr::TransactionInfo& tx) {
    tx.beneficiary_address.address += "x";
  });
  report(7, "any perturbed TX_INFO field: ABNORMAL and no entry",
         failures == 0, std::to_string(failures) + "/5 fields missed");
}

// ---- criterion 8: codec robustness ----------------------------------------

void criterion_8() {
  std::mt19937_64 rng(2024);
  bool crashed = false;
  for (int i = 0; i < 10000; ++i) {
    std::string bytes(std::uniform_int_distribution<int>(0, 128)(rng), '\0');
    for (auto& c : bytes) c = static_cast<char>(rng());
    try {
      (void)tr::decode_frame(bytes);
    } catch (const tr::FrameDecodeError&) {
      // classified rejection is the expected outcome
    } catch (...) {
      crashed = true;
    }
  }
  bool round_trips = true;
  tr::KeyPair key = tr::KeyPair::from_seed(trtest::seed_bytes(2));
  for (int i = 0; i < 100; ++i) {
    tr::Message m = tr::make_message(
        tr::MsgType::TRANSFER_REJECT,
        tr::sha256(std::to_string(i)).hex().substr(0, 32),
        tr::VaspId{"alpha-ex"}, tr::format_rfc3339(1640995200 + i),
        tr::json{{"reason", "fuzz-" + std::to_string(i)}}, key);
    std::string frame = tr::encode_frame(m);
    if (tr::encode_frame(tr::decode_frame(frame)) != frame)
      round_trips = false;
  }
  report(8, "10,000-case frame fuzz: no crash; round trips identical",
         !crashed && round_trips, "");
}

// ---- criterion 9: determinism ---------------------------------------------

void criterion_9() {
  bool ok = true;
  std::string detail;
  for (const auto& path : shipped_scenarios()) {
    tr::ScenarioResult a =
        tr::run_scenario_file(path, trtest::fresh_dir("det-a"));
    tr::ScenarioResult b =
        tr::run_scenario_file(path, trtest::fresh_dir("det-b"));
    if (!a.ok || a.transcript != b.transcript) {
      ok = false;
      detail += std::filesystem::path(path).stem().string() + "; ";
    }
  }
  report(9, "every shipped scenario: byte-identical transcripts", ok, detail);
}

// ---- criterion 10: replay and ordering ------------------------------------

void criterion_10() {
  tr::ScenarioResult replay = tr::run_scenario_file(
      std::string(TR_SCENARIO_DIR) + "/replay.json",
      trtest::fresh_dir("acc10"));

  // ordering invariant over every shipped transcript: per (vasp, session),
  // BENEFICIARY_INFO is only ever sent after a NORMAL originator check, and
  // TX_INFO only after BENEFICIARY_INFO was sent back
  bool ordering = true;
  for (const auto& path : shipped_scenarios()) {
    tr::ScenarioResult r =
        tr::run_scenario_file(path, trtest::fresh_dir("ord"));
    std::set<std::pair<std::string, std::string>> normal_checked;
    std::set<std::string> info_sent;
    std::istringstream lines(r.transcript);
    std::string line;
    while (std::getline(lines, line)) {
      tr::json e = tr::json::parse(line);
      const std::string kind = e.value("event", "");
      if (kind == "originator_check" && e.value("result", "") == "NORMAL") {
        normal_checked.insert({e.value("vasp", ""), e.value("session", "")});
      } else if (kind == "send" &&
                 e.value("type", "") == "BENEFICIARY_INFO") {
        if (!normal_checked.contains(
                {e.value("from", ""), e.value("session", "")}))
          ordering = false;
        info_sent.insert(e.value("session", ""));
      } else if (kind == "send" && e.value("type", "") == "TX_INFO") {
        if (!info_sent.contains(e.value("session", ""))) ordering = false;
      }
    }
  }
  report(10, "replayed message aborts; no PII before NORMAL check",
         replay.ok && ordering,
         ordering ? "" : "ordering violated");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures == 0) {
    std::printf("all 10 acceptance criteria satisfied\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", g_failures);
  return 1;
}
