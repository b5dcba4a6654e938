#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "travelrule/backend.hpp"
#include "travelrule/ledger.hpp"
#include "travelrule/membership.hpp"
#include "travelrule/messages.hpp"
#include "travelrule/timeutil.hpp"

namespace travelrule {

enum class SessionState {
  // originator VASP
  INIT,
  AWAIT_BENEFICIARY_INFO,
  REMITTING,
  AWAIT_TX_CONFIRM,
  AWAIT_LEDGER_ACCEPT,
  // beneficiary VASP
  AWAIT_INIT,
  CHECKING_ORIGINATOR,
  AWAIT_TX_INFO,
  CHECKING_TX,
  AWAIT_LEDGER_PROPOSE,
  // terminal (absorbing)
  COMPLETE,
  REJECTED,
  ABORTED,
  TIMED_OUT,
};

inline std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::INIT: return "INIT";
    case SessionState::AWAIT_BENEFICIARY_INFO: return "AWAIT_BENEFICIARY_INFO";
    case SessionState::REMITTING: return "REMITTING";
    case SessionState::AWAIT_TX_CONFIRM: return "AWAIT_TX_CONFIRM";
    case SessionState::AWAIT_LEDGER_ACCEPT: return "AWAIT_LEDGER_ACCEPT";
    case SessionState::AWAIT_INIT: return "AWAIT_INIT";
    case SessionState::CHECKING_ORIGINATOR: return "CHECKING_ORIGINATOR";
    case SessionState::AWAIT_TX_INFO: return "AWAIT_TX_INFO";
    case SessionState::CHECKING_TX: return "CHECKING_TX";
    case SessionState::AWAIT_LEDGER_PROPOSE: return "AWAIT_LEDGER_PROPOSE";
    case SessionState::COMPLETE: return "COMPLETE";
    case SessionState::REJECTED: return "REJECTED";
    case SessionState::ABORTED: return "ABORTED";
    case SessionState::TIMED_OUT: return "TIMED_OUT";
  }
  throw ProtocolError("unknown session state");
}

inline bool is_terminal(SessionState s) {
  return s == SessionState::COMPLETE || s == SessionState::REJECTED ||
         s == SessionState::ABORTED || s == SessionState::TIMED_OUT;
}

enum class SessionRole { ORIGINATOR_VASP, BENEFICIARY_VASP };

inline std::string to_string(SessionRole r) {
  return r == SessionRole::ORIGINATOR_VASP ? "ORIGINATOR_VASP"
                                           : "BENEFICIARY_VASP";
}

// One side's view of one Step 1 transfer.
struct TransferSession {
  std::string session_id;
  SessionRole role = SessionRole::ORIGINATOR_VASP;
  SessionState state = SessionState::INIT;
  VaspId peer;
  std::optional<PartyInfo> originator;
  std::optional<PartyInfo> beneficiary;
  std::optional<VirtualAssetAddress> beneficiary_address;
  std::string asset;
  std::string amount;
  std::optional<TransactionInfo> tx;
  std::optional<ProposedEntry> proposed;
  std::optional<Digest> final_entry_hash;
  std::int64_t deadline = 0;
  std::string terminal_reason;
  std::set<MsgType> seen;  // replay guard: one message of each type
};

enum class AddInfoState {
  AWAIT_RESPONSE,        // requester
  AWAIT_LEDGER_PROPOSE,  // requester
  AWAIT_LEDGER_ACCEPT,   // responder
  COMPLETE,
  DENIED,
  ABORTED,
  TIMED_OUT,
};

inline std::string to_string(AddInfoState s) {
  switch (s) {
    case AddInfoState::AWAIT_RESPONSE: return "AWAIT_RESPONSE";
    case AddInfoState::AWAIT_LEDGER_PROPOSE: return "AWAIT_LEDGER_PROPOSE";
    case AddInfoState::AWAIT_LEDGER_ACCEPT: return "AWAIT_LEDGER_ACCEPT";
    case AddInfoState::COMPLETE: return "COMPLETE";
    case AddInfoState::DENIED: return "DENIED";
    case AddInfoState::ABORTED: return "ABORTED";
    case AddInfoState::TIMED_OUT: return "TIMED_OUT";
  }
  throw ProtocolError("unknown addinfo state");
}

inline bool is_terminal(AddInfoState s) {
  return s == AddInfoState::COMPLETE || s == AddInfoState::DENIED ||
         s == AddInfoState::ABORTED || s == AddInfoState::TIMED_OUT;
}

enum class AddInfoRole { REQUESTER, RESPONDER };

// One side's view of one Step 2 request.
struct AddInfoSession {
  std::string session_id;
  AddInfoRole role = AddInfoRole::REQUESTER;
  AddInfoState state = AddInfoState::AWAIT_RESPONSE;
  VaspId peer;
  Digest ref_entry;
  ReasonCode reason = ReasonCode::OTHER;
  std::optional<RealNameInfo> real_name;
  std::optional<ProposedEntry> proposed;
  std::int64_t deadline = 0;
  std::string terminal_reason;
  std::set<MsgType> seen;
};

// ---------------------------------------------------------------------------
// Engine

// Single-threaded protocol core for one VASP. Drives both roles of the
// Step 1 state machine and both sides of Step 2 requests; owns the session
// store; appends to the ledger store it is given. Callers serialize access
// (the node server holds a mutex, the simulator is single-threaded).
class ProtocolEngine {
 public:
  struct Deps {
    VaspId self;
    const KeyPair* key = nullptr;
    std::function<const Registry&()> registry;
    const Clock* clock = nullptr;
    BackendAdapter* backend = nullptr;
    MockChain* chain = nullptr;
    LedgerStore* ledgers = nullptr;
    // beneficiary address -> controlling VASP
    std::function<std::optional<VaspId>(const VirtualAssetAddress&)> route;
    std::function<void(const VaspId& to, const Message& m)> send;
    std::function<void(const json& event)> observe;  // may be empty
    std::vector<std::string> denylist;  // raw names; folded on load
    std::int64_t session_timeout_seconds = 30;
    std::uint64_t rng_seed = 0;
  };

  explicit ProtocolEngine(Deps deps) : d_(std::move(deps)), rng_(d_.rng_seed) {
    for (auto& n : d_.denylist) n = comparable_name(n);
  }

  const VaspId& self() const { return d_.self; }

  // ---- local API --------------------------------------------------------

  std::string initiate_transfer(const PartyInfo& originator,
                                const VirtualAssetAddress& beneficiary_address,
                                const std::string& asset,
                                const std::string& amount) {
    throw_if_invalid(validate_party_info(originator));
    Violations vs = validate_address(beneficiary_address, "beneficiary_address");
    if (auto p = amount_problem(amount)) vs.push_back({"amount", *p});
    if (beneficiary_address.asset != asset)
      vs.push_back({"beneficiary_address.asset", "asset ticker mismatch"});
    throw_if_invalid(vs);
    auto peer = d_.route(beneficiary_address);
    if (!peer) throw ProtocolError("no route to beneficiary VASP for address");
    if (*peer == d_.self) throw ProtocolError("beneficiary address is local");

    TransferSession s;
    s.session_id = new_session_id();
    s.role = SessionRole::ORIGINATOR_VASP;
    s.state = SessionState::AWAIT_BENEFICIARY_INFO;
    s.peer = *peer;
    s.originator = originator;
    s.beneficiary_address = beneficiary_address;
    s.asset = asset;
    s.amount = amount;
    s.deadline = now() + d_.session_timeout_seconds;
    transfers_[s.session_id] = s;

    send_msg(*peer, MsgType::TRANSFER_INIT, s.session_id,
             TransferInitBody{originator, beneficiary_address, asset, amount});
    note_state(transfers_[s.session_id]);
    return s.session_id;
  }

  // Step 2 request; returns the new request session id.
  std::string request_additional_info(const Digest& ref_entry,
                                      ReasonCode reason) {
    auto found = d_.ledgers->find_entry(ref_entry);
    if (!found) throw ProtocolError("unknown entry");
    const auto& [channel, entry] = *found;
    if (!std::holds_alternative<TravelRuleRecord>(entry.payload))
      throw ProtocolError("entry is not a travel rule record");
    // Step 1 entries are proposed by the originator VASP, so the beneficiary
    // VASP is the other channel member. Only that side may ask.
    if (entry.proposer == d_.self)
      throw ProtocolError("role: only the beneficiary VASP may request "
                          "additional information");
    AddInfoSession s;
    s.session_id = new_session_id();
    s.role = AddInfoRole::REQUESTER;
    s.state = AddInfoState::AWAIT_RESPONSE;
    s.peer = channel.other(d_.self);
    s.ref_entry = ref_entry;
    s.reason = reason;
    s.deadline = now() + d_.session_timeout_seconds;
    addinfo_[s.session_id] = s;

    send_msg(s.peer, MsgType::ADDINFO_REQUEST, s.session_id,
             AddInfoRequestBody{ref_entry, reason});
    return s.session_id;
  }

  const TransferSession* find_transfer(const std::string& session_id) const {
    auto it = transfers_.find(session_id);
    return it == transfers_.end() ? nullptr : &it->second;
  }
  const AddInfoSession* find_addinfo(const std::string& session_id) const {
    auto it = addinfo_.find(session_id);
    return it == addinfo_.end() ? nullptr : &it->second;
  }
  std::size_t transfer_session_count() const { return transfers_.size(); }
  std::size_t addinfo_session_count() const { return addinfo_.size(); }

  json session_status(const std::string& session_id) const {
    if (const auto* t = find_transfer(session_id)) {
      json j{{"session_id", t->session_id},
             {"role", to_string(t->role)},
             {"state", to_string(t->state)}};
      if (!t->terminal_reason.empty()) j["reason"] = t->terminal_reason;
      if (t->final_entry_hash) j["entry_hash"] = t->final_entry_hash->hex();
      return j;
    }
    if (const auto* a = find_addinfo(session_id)) {
      json j{{"session_id", a->session_id},
             {"state", to_string(a->state)}};
      if (!a->terminal_reason.empty()) j["reason"] = a->terminal_reason;
      if (a->real_name) j["real_name"] = *a->real_name;
      return j;
    }
    throw ProtocolError("unknown session: " + session_id);
  }

  // ---- timers -----------------------------------------------------------

  void tick() {
    const std::int64_t t = now();
    for (auto& [id, s] : transfers_) {
      if (!is_terminal(s.state) && t >= s.deadline) {
        s.state = SessionState::TIMED_OUT;
        s.terminal_reason = "deadline passed";
        note_state(s);
      }
    }
    for (auto& [id, s] : addinfo_) {
      if (!is_terminal(s.state) && t >= s.deadline) {
        s.state = AddInfoState::TIMED_OUT;
        s.terminal_reason = "deadline passed";
      }
    }
  }

  // ---- inbound ----------------------------------------------------------

  void handle_message(const Message& m) {
    if (m.version != Message::kVersion) return drop(m, "bad version");
    if (m.sender == d_.self) return drop(m, "message from self");
    auto key = d_.registry().active_key_of(m.sender, now());
    if (!key) return drop(m, "sender has no active credential");
    if (!verify_message_signature(m, *key)) return drop(m, "bad signature");

    try {
      dispatch(m);
    } catch (const std::exception& e) {
      // A handler fault must not take the node down; the session is dead.
      abort_transfer(m.session_id, std::string("handler fault: ") + e.what(),
                     /*notify_peer=*/false);
    }
  }

 private:
  // ---- dispatch ---------------------------------------------------------

  void dispatch(const Message& m) {
    switch (m.msg_type) {
      case MsgType::TRANSFER_INIT:
        return on_transfer_init(m);
      case MsgType::ADDINFO_REQUEST:
        return on_addinfo_request(m);
      case MsgType::LEDGER_PROPOSE:
      case MsgType::LEDGER_ACCEPT:
        if (transfers_.contains(m.session_id)) return on_transfer_msg(m);
        if (addinfo_.contains(m.session_id)) return on_addinfo_msg(m);
        return drop(m, "unknown session");
      case MsgType::TRANSFER_REJECT:
      case MsgType::BENEFICIARY_INFO:
      case MsgType::TX_INFO:
      case MsgType::TX_CONFIRM:
        if (!transfers_.contains(m.session_id))
          return drop(m, "unknown session");
        return on_transfer_msg(m);
      case MsgType::ADDINFO_RESPONSE:
      case MsgType::ADDINFO_DENY:
        if (!addinfo_.contains(m.session_id))
          return drop(m, "unknown session");
        return on_addinfo_msg(m);
    }
  }

  void on_transfer_msg(const Message& m) {
    TransferSession& s = transfers_.at(m.session_id);
    if (is_terminal(s.state)) return drop(m, "session terminal");
    if (m.sender != s.peer) return drop(m, "sender is not the session peer");
    if (s.seen.contains(m.msg_type)) {
      // replay: same msg_type seen before on this session
      return abort_session(s, "replayed " + to_string(m.msg_type),
                           /*notify_peer=*/true);
    }
    s.seen.insert(m.msg_type);

    switch (m.msg_type) {
      case MsgType::TRANSFER_REJECT: {
        auto body = m.body_as<TransferRejectBody>();
        if (s.state == SessionState::AWAIT_BENEFICIARY_INFO) {
          s.state = SessionState::REJECTED;
          s.terminal_reason = body.reason;
        } else {
          s.state = SessionState::ABORTED;
          s.terminal_reason = "peer error: " + body.reason;
        }
        note_state(s);
        return;
      }
      case MsgType::BENEFICIARY_INFO:
        return expect(s, m, SessionState::AWAIT_BENEFICIARY_INFO,
                      SessionRole::ORIGINATOR_VASP,
                      [&] { on_beneficiary_info(s, m); });
      case MsgType::TX_INFO:
        return expect(s, m, SessionState::AWAIT_TX_INFO,
                      SessionRole::BENEFICIARY_VASP,
                      [&] { on_tx_info(s, m); });
      case MsgType::TX_CONFIRM:
        return expect(s, m, SessionState::AWAIT_TX_CONFIRM,
                      SessionRole::ORIGINATOR_VASP,
                      [&] { on_tx_confirm(s, m); });
      case MsgType::LEDGER_PROPOSE:
        return expect(s, m, SessionState::AWAIT_LEDGER_PROPOSE,
                      SessionRole::BENEFICIARY_VASP,
                      [&] { on_ledger_propose_transfer(s, m); });
      case MsgType::LEDGER_ACCEPT:
        return expect(s, m, SessionState::AWAIT_LEDGER_ACCEPT,
                      SessionRole::ORIGINATOR_VASP,
                      [&] { on_ledger_accept_transfer(s, m); });
      default:
        return abort_session(s, "unexpected " + to_string(m.msg_type),
                             /*notify_peer=*/true);
    }
  }

  template <typename Fn>
  void expect(TransferSession& s, const Message& m, SessionState expected,
              SessionRole expected_role, Fn&& fn) {
    if (s.state != expected || s.role != expected_role) {
      return abort_session(
          s, to_string(m.msg_type) + " in state " + to_string(s.state),
          /*notify_peer=*/true);
    }
    s.deadline = now() + d_.session_timeout_seconds;
    fn();
  }

  // ---- Step 1, beneficiary side -----------------------------------------

  void on_transfer_init(const Message& m) {
    if (transfers_.contains(m.session_id) || addinfo_.contains(m.session_id))
      return drop(m, "duplicate session id");  // first wins

    auto body = m.body_as<TransferInitBody>();
    TransferSession s;
    s.session_id = m.session_id;
    s.role = SessionRole::BENEFICIARY_VASP;
    s.state = SessionState::CHECKING_ORIGINATOR;
    s.peer = m.sender;
    s.originator = body.originator;
    s.beneficiary_address = body.beneficiary_address;
    s.asset = body.asset;
    s.amount = body.amount;
    s.seen.insert(MsgType::TRANSFER_INIT);
    s.deadline = now() + d_.session_timeout_seconds;
    auto& stored = transfers_[s.session_id] = s;

    // "checks whether the originator information is normal"
    std::string why;
    const bool normal = check_originator_info(body.originator, &why);
    observe({{"event", "originator_check"},
             {"vasp", d_.self},
             {"session", s.session_id},
             {"result", normal ? "NORMAL" : "ABNORMAL"}});
    if (!normal) {
      send_msg(stored.peer, MsgType::TRANSFER_REJECT, stored.session_id,
               TransferRejectBody{why});
      stored.state = SessionState::REJECTED;
      stored.terminal_reason = why;
      note_state(stored);
      return;
    }

    auto customer =
        d_.backend->lookup_customer_by_address(body.beneficiary_address);
    if (!customer) {
      send_msg(stored.peer, MsgType::TRANSFER_REJECT, stored.session_id,
               TransferRejectBody{"beneficiary address unknown"});
      stored.state = SessionState::REJECTED;
      stored.terminal_reason = "beneficiary address unknown";
      note_state(stored);
      return;
    }

    stored.beneficiary = PartyInfo{customer->name, body.beneficiary_address};
    send_msg(stored.peer, MsgType::BENEFICIARY_INFO, stored.session_id,
             BeneficiaryInfoBody{*stored.beneficiary});
    stored.state = SessionState::AWAIT_TX_INFO;
    note_state(stored);
  }

  void on_tx_info(TransferSession& s, const Message& m) {
    auto body = m.body_as<TxInfoBody>();
    s.state = SessionState::CHECKING_TX;
    std::string why;
    const bool normal = confirm_transaction(body.tx, s, &why);
    observe({{"event", "tx_check"},
             {"vasp", d_.self},
             {"session", s.session_id},
             {"result", normal ? "NORMAL" : "ABNORMAL"}});
    if (!normal) {
      send_msg(s.peer, MsgType::TX_CONFIRM, s.session_id,
               TxConfirmBody{false, why});
      s.state = SessionState::ABORTED;
      s.terminal_reason = why;
      note_state(s);
      return;
    }
    s.tx = body.tx;
    send_msg(s.peer, MsgType::TX_CONFIRM, s.session_id,
             TxConfirmBody{true, ""});
    s.state = SessionState::AWAIT_LEDGER_PROPOSE;
    note_state(s);
  }

  void on_ledger_propose_transfer(TransferSession& s, const Message& m) {
    auto body = m.body_as<LedgerProposeBody>();
    const auto* record = std::get_if<TravelRuleRecord>(&body.proposed.payload);
    if (record == nullptr)
      return abort_session(s, "proposal payload is not a travel rule record",
                           true);
    // The proposed record must byte-equal the data this side saw exchanged.
    TravelRuleRecord expected;
    expected.session_id = s.session_id;
    expected.originator = *s.originator;
    expected.beneficiary = *s.beneficiary;
    expected.tx = *s.tx;
    if (!(*record == expected))
      return abort_session(s, "proposal does not match session transcript",
                           true);
    ChannelId channel(d_.self, s.peer);
    auto& ledger = d_.ledgers->get_or_create(channel);
    LedgerEntry e;
    try {
      e = ledger.countersign(body.proposed, d_.self, *d_.key, d_.registry(),
                             now());
    } catch (const LedgerError& err) {
      return abort_session(s, std::string("countersign: ") + err.what(), true);
    }
    note_append(channel, e);
    send_msg(s.peer, MsgType::LEDGER_ACCEPT, s.session_id,
             LedgerAcceptBody{e.acceptor_sig});
    s.final_entry_hash = e.entry_hash;
    s.state = SessionState::COMPLETE;
    note_state(s);
  }

  // ---- Step 1, originator side ------------------------------------------

  void on_beneficiary_info(TransferSession& s, const Message& m) {
    auto body = m.body_as<BeneficiaryInfoBody>();
    if (!validate_party_info(body.beneficiary).empty())
      return abort_session(s, "invalid beneficiary info", true);
    if (body.beneficiary.address != *s.beneficiary_address)
      return abort_session(s, "beneficiary address mismatch", true);
    s.beneficiary = body.beneficiary;

    // Both parties' essential information is now exchanged; remit.
    s.state = SessionState::REMITTING;
    TransactionInfo tx = d_.chain->execute_transfer(
        s.originator->address, *s.beneficiary_address, s.asset, s.amount,
        now());
    s.tx = tx;
    send_msg(s.peer, MsgType::TX_INFO, s.session_id, TxInfoBody{tx});
    s.state = SessionState::AWAIT_TX_CONFIRM;
    note_state(s);
  }

  void on_tx_confirm(TransferSession& s, const Message& m) {
    auto body = m.body_as<TxConfirmBody>();
    if (!body.normal) {
      s.state = SessionState::ABORTED;
      s.terminal_reason = "transaction abnormal: " + body.reason;
      note_state(s);
      return;
    }
    TravelRuleRecord record;
    record.session_id = s.session_id;
    record.originator = *s.originator;
    record.beneficiary = *s.beneficiary;
    record.tx = *s.tx;
    ChannelId channel(d_.self, s.peer);
    auto& ledger = d_.ledgers->get_or_create(channel);
    s.proposed = ledger.propose(record, d_.self, *d_.key,
                                format_rfc3339(now()));
    send_msg(s.peer, MsgType::LEDGER_PROPOSE, s.session_id,
             LedgerProposeBody{*s.proposed});
    s.state = SessionState::AWAIT_LEDGER_ACCEPT;
    note_state(s);
  }

  void on_ledger_accept_transfer(TransferSession& s, const Message& m) {
    auto body = m.body_as<LedgerAcceptBody>();
    ChannelId channel(d_.self, s.peer);
    auto& ledger = d_.ledgers->get_or_create(channel);
    LedgerEntry e;
    try {
      e = ledger.finalize_as_proposer(*s.proposed, body.acceptor_sig,
                                      d_.registry(), now());
    } catch (const LedgerError& err) {
      return abort_session(s, std::string("finalize: ") + err.what(), true);
    }
    note_append(channel, e);
    s.final_entry_hash = e.entry_hash;
    s.state = SessionState::COMPLETE;
    note_state(s);
  }

  // ---- Step 2 -----------------------------------------------------------

  void on_addinfo_request(const Message& m) {
    if (addinfo_.contains(m.session_id) || transfers_.contains(m.session_id))
      return drop(m, "duplicate session id");
    auto body = m.body_as<AddInfoRequestBody>();

    AddInfoSession s;
    s.session_id = m.session_id;
    s.role = AddInfoRole::RESPONDER;
    s.peer = m.sender;
    s.ref_entry = body.ref_entry;
    s.reason = body.reason;
    s.seen.insert(MsgType::ADDINFO_REQUEST);
    s.deadline = now() + d_.session_timeout_seconds;
    auto& stored = addinfo_[s.session_id] = s;

    auto deny = [&](const std::string& why) {
      send_msg(stored.peer, MsgType::ADDINFO_DENY, stored.session_id,
               AddInfoDenyBody{why});
      stored.state = AddInfoState::DENIED;
      stored.terminal_reason = why;
    };

    ChannelId channel;
    try {
      channel = ChannelId(d_.self, m.sender);
    } catch (const LedgerError&) {
      return deny("bad channel");
    }
    const ChannelLedger* ledger = d_.ledgers->find(channel);
    auto entry = ledger ? ledger->find_by_hash(body.ref_entry) : std::nullopt;
    if (!entry || !std::holds_alternative<TravelRuleRecord>(entry->payload))
      return deny("unknown record");
    // Only the beneficiary VASP of the record may ask; the record's proposer
    // was the originator VASP, which must be us.
    if (entry->proposer != d_.self) return deny("role");

    const auto& record = std::get<TravelRuleRecord>(entry->payload);
    auto customer =
        d_.backend->lookup_customer_by_address(record.originator.address);
    if (!customer) return deny("unavailable");
    auto real_name = d_.backend->get_real_name(customer->customer_id);
    if (!real_name) return deny("unavailable");

    send_msg(stored.peer, MsgType::ADDINFO_RESPONSE, stored.session_id,
             AddInfoResponseBody{*real_name});

    AdditionalInfoRecord add;
    add.session_id = stored.session_id;
    add.ref_entry = body.ref_entry;
    add.reason = body.reason;
    add.real_name = *real_name;
    auto& mutable_ledger = d_.ledgers->get_or_create(channel);
    stored.proposed = mutable_ledger.propose(add, d_.self, *d_.key,
                                             format_rfc3339(now()));
    stored.real_name = real_name;
    send_msg(stored.peer, MsgType::LEDGER_PROPOSE, stored.session_id,
             LedgerProposeBody{*stored.proposed});
    stored.state = AddInfoState::AWAIT_LEDGER_ACCEPT;
  }

  void on_addinfo_msg(const Message& m) {
    AddInfoSession& s = addinfo_.at(m.session_id);
    if (is_terminal(s.state)) return drop(m, "session terminal");
    if (m.sender != s.peer) return drop(m, "sender is not the session peer");
    if (s.seen.contains(m.msg_type))
      return abort_addinfo(s, "replayed " + to_string(m.msg_type), true);
    s.seen.insert(m.msg_type);
    s.deadline = now() + d_.session_timeout_seconds;

    switch (m.msg_type) {
      case MsgType::ADDINFO_DENY: {
        auto body = m.body_as<AddInfoDenyBody>();
        if (s.role != AddInfoRole::REQUESTER ||
            s.state != AddInfoState::AWAIT_RESPONSE)
          return abort_addinfo(s, "unexpected ADDINFO_DENY", true);
        s.state = AddInfoState::DENIED;
        s.terminal_reason = body.reason;
        return;
      }
      case MsgType::ADDINFO_RESPONSE: {
        if (s.role != AddInfoRole::REQUESTER ||
            s.state != AddInfoState::AWAIT_RESPONSE)
          return abort_addinfo(s, "unexpected ADDINFO_RESPONSE", true);
        auto body = m.body_as<AddInfoResponseBody>();
        if (!validate_real_name(body.real_name).empty())
          return abort_addinfo(s, "invalid real name info", true);
        s.real_name = body.real_name;
        s.state = AddInfoState::AWAIT_LEDGER_PROPOSE;
        return;
      }
      case MsgType::LEDGER_PROPOSE: {
        if (s.role != AddInfoRole::REQUESTER ||
            s.state != AddInfoState::AWAIT_LEDGER_PROPOSE)
          return abort_addinfo(s, "unexpected LEDGER_PROPOSE", true);
        auto body = m.body_as<LedgerProposeBody>();
        const auto* add =
            std::get_if<AdditionalInfoRecord>(&body.proposed.payload);
        if (add == nullptr || add->ref_entry != s.ref_entry ||
            add->session_id != s.session_id || !(add->real_name == *s.real_name))
          return abort_addinfo(s, "proposal does not match response", true);
        ChannelId channel(d_.self, s.peer);
        auto& ledger = d_.ledgers->get_or_create(channel);
        LedgerEntry e;
        try {
          e = ledger.countersign(body.proposed, d_.self, *d_.key,
                                 d_.registry(), now());
        } catch (const LedgerError& err) {
          return abort_addinfo(s, std::string("countersign: ") + err.what(),
                               true);
        }
        note_append(channel, e);
        send_msg(s.peer, MsgType::LEDGER_ACCEPT, s.session_id,
                 LedgerAcceptBody{e.acceptor_sig});
        s.state = AddInfoState::COMPLETE;
        return;
      }
      case MsgType::LEDGER_ACCEPT: {
        if (s.role != AddInfoRole::RESPONDER ||
            s.state != AddInfoState::AWAIT_LEDGER_ACCEPT)
          return abort_addinfo(s, "unexpected LEDGER_ACCEPT", true);
        auto body = m.body_as<LedgerAcceptBody>();
        ChannelId channel(d_.self, s.peer);
        auto& ledger = d_.ledgers->get_or_create(channel);
        LedgerEntry e;
        try {
          e = ledger.finalize_as_proposer(*s.proposed, body.acceptor_sig,
                                          d_.registry(), now());
        } catch (const LedgerError& err) {
          return abort_addinfo(s, std::string("finalize: ") + err.what(),
                               true);
        }
        note_append(channel, e);
        s.state = AddInfoState::COMPLETE;
        return;
      }
      default:
        return abort_addinfo(s, "unexpected " + to_string(m.msg_type), true);
    }
  }

  // ---- policy hooks -----------------------------------------------------

  bool check_originator_info(const PartyInfo& originator, std::string* why) {
    if (!validate_party_info(originator).empty()) {
      *why = "originator info invalid";
      return false;
    }
    const std::string folded = comparable_name(originator.name);
    for (const auto& denied : d_.denylist) {
      if (folded == denied) {
        *why = "denylisted";
        return false;
      }
    }
    return true;
  }

  bool confirm_transaction(const TransactionInfo& tx, const TransferSession& s,
                           std::string* why) {
    if (!validate_transaction_info(tx).empty()) {
      *why = "transaction info invalid";
      return false;
    }
    auto chain_tx = d_.chain->get_tx(tx.tx_id);
    if (!chain_tx) {
      *why = "tx not found";
      return false;
    }
    if (!(*chain_tx == tx)) {
      *why = "tx does not match chain";
      return false;
    }
    if (tx.amount != s.amount) {
      *why = "amount mismatch";
      return false;
    }
    if (tx.asset != s.asset) {
      *why = "asset mismatch";
      return false;
    }
    if (tx.beneficiary_address != *s.beneficiary_address) {
      *why = "beneficiary address mismatch";
      return false;
    }
    if (tx.originator_address != s.originator->address) {
      *why = "originator address mismatch";
      return false;
    }
    return true;
  }

  // ---- plumbing ---------------------------------------------------------

  std::int64_t now() const { return d_.clock->now_seconds(); }

  std::string new_session_id() {
    // Mixing in the clock keeps ids unique across a restart, which reseeds
    // the rng; peers treat a repeated id as a replayed TRANSFER_INIT.
    Digest d = sha256(d_.self.value + ":" + std::to_string(now()) + ":" +
                      std::to_string(rng_()));
    return d.hex().substr(0, 32);
  }

  template <typename Body>
  void send_msg(const VaspId& to, MsgType type, const std::string& session_id,
                const Body& body) {
    Message m = make_message(type, session_id, d_.self,
                             format_rfc3339(now()), json(body), *d_.key);
    observe({{"event", "send"},
             {"from", d_.self},
             {"to", to},
             {"type", to_string(type)},
             {"session", session_id}});
    d_.send(to, m);
  }

  void drop(const Message& m, const std::string& reason) {
    observe({{"event", "drop_message"},
             {"vasp", d_.self},
             {"type", to_string(m.msg_type)},
             {"session", m.session_id},
             {"reason", reason}});
  }

  void abort_session(TransferSession& s, const std::string& reason,
                     bool notify_peer) {
    if (is_terminal(s.state)) return;
    s.state = SessionState::ABORTED;
    s.terminal_reason = reason;
    if (notify_peer) {
      send_msg(s.peer, MsgType::TRANSFER_REJECT, s.session_id,
               TransferRejectBody{"protocol error: " + reason});
    }
    note_state(s);
  }

  void abort_transfer(const std::string& session_id, const std::string& reason,
                      bool notify_peer) {
    auto it = transfers_.find(session_id);
    if (it != transfers_.end()) abort_session(it->second, reason, notify_peer);
    auto ait = addinfo_.find(session_id);
    if (ait != addinfo_.end()) abort_addinfo(ait->second, reason, notify_peer);
  }

  void abort_addinfo(AddInfoSession& s, const std::string& reason,
                     bool notify_peer) {
    if (is_terminal(s.state)) return;
    s.state = AddInfoState::ABORTED;
    s.terminal_reason = reason;
    if (notify_peer) {
      send_msg(s.peer, MsgType::ADDINFO_DENY, s.session_id,
               AddInfoDenyBody{"protocol error: " + reason});
    }
  }

  void note_state(const TransferSession& s) {
    json j{{"event", "session_state"},
           {"vasp", d_.self},
           {"session", s.session_id},
           {"role", to_string(s.role)},
           {"state", to_string(s.state)}};
    observe(j);
  }

  void note_append(const ChannelId& channel, const LedgerEntry& e) {
    observe({{"event", "ledger_append"},
             {"vasp", d_.self},
             {"channel", channel.str()},
             {"seq", e.seq},
             {"entry_hash", e.entry_hash.hex()}});
  }

  void observe(const json& event) {
    if (d_.observe) d_.observe(event);
  }

  Deps d_;
  std::mt19937_64 rng_;
  std::map<std::string, TransferSession> transfers_;
  std::map<std::string, AddInfoSession> addinfo_;
};

}  // namespace travelrule
