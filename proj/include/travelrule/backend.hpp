#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "travelrule/crypto.hpp"
#include "travelrule/datamodel.hpp"

namespace travelrule {

// Read-only view of the exchange backend a VASP node is connected to.
class BackendAdapter {
 public:
  virtual ~BackendAdapter() = default;
  virtual std::optional<CustomerRecord> lookup_customer_by_address(
      const VirtualAssetAddress& address) const = 0;
  virtual std::optional<CustomerRecord> lookup_customer_by_id(
      const std::string& customer_id) const = 0;
  virtual std::optional<RealNameInfo> get_real_name(
      const std::string& customer_id) const = 0;
};

// Fixture-file backend: a flat list of CustomerRecords.
class JsonBackend final : public BackendAdapter {
 public:
  JsonBackend() = default;

  explicit JsonBackend(const json& fixture) {
    for (const auto& cj : fixture) {
      CustomerRecord c = cj.get<CustomerRecord>();
      throw_if_invalid(validate_customer_record(c));
      customers_.push_back(std::move(c));
    }
  }

  static JsonBackend from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read backend fixture: " + path);
    return JsonBackend(json::parse(f));
  }

  std::optional<CustomerRecord> lookup_customer_by_address(
      const VirtualAssetAddress& address) const override {
    for (const auto& c : customers_)
      for (const auto& a : c.addresses)
        if (a == address) return c;
    return std::nullopt;
  }

  std::optional<CustomerRecord> lookup_customer_by_id(
      const std::string& customer_id) const override {
    for (const auto& c : customers_)
      if (c.customer_id == customer_id) return c;
    return std::nullopt;
  }

  std::optional<RealNameInfo> get_real_name(
      const std::string& customer_id) const override {
    auto c = lookup_customer_by_id(customer_id);
    if (!c) return std::nullopt;
    return c->real_name;
  }

  const std::vector<CustomerRecord>& customers() const { return customers_; }

 private:
  std::vector<CustomerRecord> customers_;
};

// Stand-in for the virtual asset chain. Executed transfers are immutable and
// tx ids are unique; ids are derived from the transfer content and a counter
// so simulation runs are reproducible.
class MockChain {
 public:
  MockChain() = default;
  explicit MockChain(std::string persist_path)
      : path_(std::move(persist_path)) {
    reload();
  }

  TransactionInfo execute_transfer(const VirtualAssetAddress& from,
                                   const VirtualAssetAddress& to,
                                   const std::string& asset,
                                   const std::string& amount,
                                   std::int64_t now_seconds) {
    TransactionInfo tx;
    tx.asset = asset;
    tx.amount = amount;
    tx.originator_address = from;
    tx.beneficiary_address = to;
    tx.executed_at = format_rfc3339(now_seconds);
    tx.tx_id = derive_tx_id(tx, counter_++);
    throw_if_invalid(validate_transaction_info(tx));
    txs_[tx.tx_id] = tx;
    if (!path_.empty()) {
      std::ofstream f(path_, std::ios::app);
      f << canonical_bytes(json(tx)) << "\n";
    }
    return tx;
  }

  std::optional<TransactionInfo> get_tx(const std::string& tx_id) {
    auto it = txs_.find(tx_id);
    if (it == txs_.end() && !path_.empty()) {
      // another process may have appended since we loaded; pick up its txs
      reload();
      it = txs_.find(tx_id);
    }
    if (it == txs_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void reload() {
    std::ifstream f(path_);
    std::string line;
    while (f && std::getline(f, line)) {
      if (line.empty()) continue;
      TransactionInfo tx = json::parse(line).get<TransactionInfo>();
      if (txs_.insert({tx.tx_id, tx}).second) ++counter_;
    }
  }

  static std::string derive_tx_id(const TransactionInfo& tx,
                                  std::uint64_t counter) {
    json j{{"n", counter},
           {"from", tx.originator_address},
           {"to", tx.beneficiary_address},
           {"asset", tx.asset},
           {"amount", tx.amount}};
    return canonical_digest(j).hex().substr(0, 32);
  }

  std::string path_;
  std::map<std::string, TransactionInfo> txs_;
  std::uint64_t counter_ = 0;
};

}  // namespace travelrule
