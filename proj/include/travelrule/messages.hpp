#pragma once

#include <optional>
#include <string>

#include "travelrule/crypto.hpp"
#include "travelrule/datamodel.hpp"
#include "travelrule/ledger.hpp"

namespace travelrule {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MsgType {
  // Step 1 — provision of essential information
  TRANSFER_INIT,
  TRANSFER_REJECT,
  BENEFICIARY_INFO,
  TX_INFO,
  TX_CONFIRM,
  LEDGER_PROPOSE,
  LEDGER_ACCEPT,
  // Step 2 — provision of additional information
  ADDINFO_REQUEST,
  ADDINFO_RESPONSE,
  ADDINFO_DENY,
};

inline std::string to_string(MsgType t) {
  switch (t) {
    case MsgType::TRANSFER_INIT: return "TRANSFER_INIT";
    case MsgType::TRANSFER_REJECT: return "TRANSFER_REJECT";
    case MsgType::BENEFICIARY_INFO: return "BENEFICIARY_INFO";
    case MsgType::TX_INFO: return "TX_INFO";
    case MsgType::TX_CONFIRM: return "TX_CONFIRM";
    case MsgType::LEDGER_PROPOSE: return "LEDGER_PROPOSE";
    case MsgType::LEDGER_ACCEPT: return "LEDGER_ACCEPT";
    case MsgType::ADDINFO_REQUEST: return "ADDINFO_REQUEST";
    case MsgType::ADDINFO_RESPONSE: return "ADDINFO_RESPONSE";
    case MsgType::ADDINFO_DENY: return "ADDINFO_DENY";
  }
  throw ProtocolError("unknown msg type");
}

inline MsgType msg_type_from_string(const std::string& s) {
  if (s == "TRANSFER_INIT") return MsgType::TRANSFER_INIT;
  if (s == "TRANSFER_REJECT") return MsgType::TRANSFER_REJECT;
  if (s == "BENEFICIARY_INFO") return MsgType::BENEFICIARY_INFO;
  if (s == "TX_INFO") return MsgType::TX_INFO;
  if (s == "TX_CONFIRM") return MsgType::TX_CONFIRM;
  if (s == "LEDGER_PROPOSE") return MsgType::LEDGER_PROPOSE;
  if (s == "LEDGER_ACCEPT") return MsgType::LEDGER_ACCEPT;
  if (s == "ADDINFO_REQUEST") return MsgType::ADDINFO_REQUEST;
  if (s == "ADDINFO_RESPONSE") return MsgType::ADDINFO_RESPONSE;
  if (s == "ADDINFO_DENY") return MsgType::ADDINFO_DENY;
  throw ProtocolError("unknown msg type: " + s);
}

// ---------------------------------------------------------------------------
// Message bodies

struct TransferInitBody {
  PartyInfo originator;
  VirtualAssetAddress beneficiary_address;
  std::string asset;
  std::string amount;
  bool operator==(const TransferInitBody&) const = default;
};
inline void to_json(json& j, const TransferInitBody& b) {
  j = json{{"originator", b.originator},
           {"beneficiary_address", b.beneficiary_address},
           {"asset", b.asset},
           {"amount", b.amount}};
}
inline void from_json(const json& j, TransferInitBody& b) {
  j.at("originator").get_to(b.originator);
  j.at("beneficiary_address").get_to(b.beneficiary_address);
  j.at("asset").get_to(b.asset);
  j.at("amount").get_to(b.amount);
}

struct TransferRejectBody {
  std::string reason;
  bool operator==(const TransferRejectBody&) const = default;
};
inline void to_json(json& j, const TransferRejectBody& b) {
  j = json{{"reason", b.reason}};
}
inline void from_json(const json& j, TransferRejectBody& b) {
  j.at("reason").get_to(b.reason);
}

struct BeneficiaryInfoBody {
  PartyInfo beneficiary;
  bool operator==(const BeneficiaryInfoBody&) const = default;
};
inline void to_json(json& j, const BeneficiaryInfoBody& b) {
  j = json{{"beneficiary", b.beneficiary}};
}
inline void from_json(const json& j, BeneficiaryInfoBody& b) {
  j.at("beneficiary").get_to(b.beneficiary);
}

struct TxInfoBody {
  TransactionInfo tx;
  bool operator==(const TxInfoBody&) const = default;
};
inline void to_json(json& j, const TxInfoBody& b) { j = json{{"tx", b.tx}}; }
inline void from_json(const json& j, TxInfoBody& b) { j.at("tx").get_to(b.tx); }

struct TxConfirmBody {
  bool normal = false;
  std::string reason;  // empty when normal
  bool operator==(const TxConfirmBody&) const = default;
};
inline void to_json(json& j, const TxConfirmBody& b) {
  j = json{{"status", b.normal ? "NORMAL" : "ABNORMAL"}};
  if (!b.reason.empty()) j["reason"] = b.reason;
}
inline void from_json(const json& j, TxConfirmBody& b) {
  const std::string s = j.at("status").get<std::string>();
  if (s != "NORMAL" && s != "ABNORMAL")
    throw ProtocolError("bad TX_CONFIRM status");
  b.normal = s == "NORMAL";
  b.reason = j.value("reason", "");
}

struct LedgerProposeBody {
  ProposedEntry proposed;
};
inline void to_json(json& j, const LedgerProposeBody& b) {
  j = json{{"proposed", b.proposed}};
}
inline void from_json(const json& j, LedgerProposeBody& b) {
  j.at("proposed").get_to(b.proposed);
}

struct LedgerAcceptBody {
  Signature acceptor_sig;
  bool operator==(const LedgerAcceptBody&) const = default;
};
inline void to_json(json& j, const LedgerAcceptBody& b) {
  j = json{{"acceptor_sig", b.acceptor_sig.hex()}};
}
inline void from_json(const json& j, LedgerAcceptBody& b) {
  b.acceptor_sig = Signature::parse(j.at("acceptor_sig").get<std::string>());
}

struct AddInfoRequestBody {
  Digest ref_entry;
  ReasonCode reason = ReasonCode::OTHER;
  bool operator==(const AddInfoRequestBody&) const = default;
};
inline void to_json(json& j, const AddInfoRequestBody& b) {
  j = json{{"ref_entry", b.ref_entry.hex()}, {"reason", b.reason}};
}
inline void from_json(const json& j, AddInfoRequestBody& b) {
  b.ref_entry = Digest::parse(j.at("ref_entry").get<std::string>());
  j.at("reason").get_to(b.reason);
}

struct AddInfoResponseBody {
  RealNameInfo real_name;
  bool operator==(const AddInfoResponseBody&) const = default;
};
inline void to_json(json& j, const AddInfoResponseBody& b) {
  j = json{{"real_name", b.real_name}};
}
inline void from_json(const json& j, AddInfoResponseBody& b) {
  j.at("real_name").get_to(b.real_name);
}

struct AddInfoDenyBody {
  std::string reason;
  bool operator==(const AddInfoDenyBody&) const = default;
};
inline void to_json(json& j, const AddInfoDenyBody& b) {
  j = json{{"reason", b.reason}};
}
inline void from_json(const json& j, AddInfoDenyBody& b) {
  j.at("reason").get_to(b.reason);
}

// ---------------------------------------------------------------------------
// Signed envelope

struct Message {
  static constexpr int kVersion = 1;

  int version = kVersion;
  MsgType msg_type = MsgType::TRANSFER_INIT;
  std::string session_id;  // 16 random bytes, lowercase hex
  VaspId sender;
  std::string sent_at;  // RFC 3339 UTC
  json body;
  Signature sender_sig;

  json unsigned_json() const {
    return json{{"version", version},
                {"msg_type", to_string(msg_type)},
                {"session_id", session_id},
                {"sender", sender},
                {"sent_at", sent_at},
                {"body", body}};
  }
  Digest signing_digest() const { return canonical_digest(unsigned_json()); }

  template <typename Body>
  Body body_as() const {
    return body.get<Body>();
  }
};

inline bool well_formed_session_id(const std::string& s) {
  if (s.size() != 32) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return hex_nibble(c) >= 0; });
}

inline void to_json(json& j, const Message& m) {
  j = m.unsigned_json();
  j["sender_sig"] = m.sender_sig.hex();
}
inline void from_json(const json& j, Message& m) {
  j.at("version").get_to(m.version);
  if (m.version != Message::kVersion)
    throw ProtocolError("unsupported message version");
  m.msg_type = msg_type_from_string(j.at("msg_type").get<std::string>());
  j.at("session_id").get_to(m.session_id);
  if (!well_formed_session_id(m.session_id))
    throw ProtocolError("bad session id");
  j.at("sender").get_to(m.sender);
  j.at("sent_at").get_to(m.sent_at);
  if (!parse_rfc3339(m.sent_at)) throw ProtocolError("bad sent_at");
  m.body = j.at("body");
  m.sender_sig = Signature::parse(j.at("sender_sig").get<std::string>());
}

inline Message make_message(MsgType type, std::string session_id,
                            const VaspId& sender, const std::string& sent_at,
                            json body, const KeyPair& key) {
  Message m;
  m.msg_type = type;
  m.session_id = std::move(session_id);
  m.sender = sender;
  m.sent_at = sent_at;
  m.body = std::move(body);
  m.sender_sig = key.sign(m.signing_digest().bytes);
  return m;
}

inline bool verify_message_signature(const Message& m, const PublicKey& pk) {
  return verify(pk, std::span<const std::uint8_t>(m.signing_digest().bytes),
                m.sender_sig);
}

}  // namespace travelrule
