// Operator CLI: authority management, node daemon, transfer submission,
// ledger inspection, and scenario runs. Every command prints a JSON result
// line followed by a human summary; exit code 0 only on success.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>

#include "travelrule/harness.hpp"
#include "travelrule/tcp.hpp"

namespace tr = travelrule;
namespace fs = std::filesystem;

namespace {

int emit(const tr::json& result, const std::string& summary, bool ok) {
  std::cout << tr::canonical_bytes(result) << "\n" << summary << "\n";
  return ok ? 0 : 1;
}

int emit_error(const std::string& what) {
  return emit({{"ok", false}, {"error", what}}, "error: " + what, false);
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"travel rule compliance network CLI"};
  app.require_subcommand(1);

  // ---- authority --------------------------------------------------------
  auto* authority = app.add_subcommand("authority", "authentication node");
  authority->require_subcommand(1);

  std::string registry_path, authority_key_path;
  auto* auth_init = authority->add_subcommand("init", "create authority key and empty registry");
  auth_init->add_option("--registry", registry_path)->required();
  auth_init->add_option("--key-out", authority_key_path)->required();

  std::string issue_vasp, issue_name, issue_key_out, issue_pubkey;
  int issue_days = 365;
  auto* auth_issue = authority->add_subcommand("issue", "admit a VASP");
  auth_issue->add_option("--registry", registry_path)->required();
  auth_issue->add_option("--authority-key", authority_key_path)->required();
  auth_issue->add_option("--vasp-id", issue_vasp)->required();
  auth_issue->add_option("--display-name", issue_name);
  auth_issue->add_option("--days", issue_days);
  auth_issue->add_option("--vasp-key-out", issue_key_out);
  auth_issue->add_option("--public-key", issue_pubkey);

  std::string revoke_vasp;
  auto* auth_revoke = authority->add_subcommand("revoke", "revoke a VASP");
  auth_revoke->add_option("--registry", registry_path)->required();
  auth_revoke->add_option("--authority-key", authority_key_path)->required();
  auth_revoke->add_option("--vasp-id", revoke_vasp)->required();

  // ---- node -------------------------------------------------------------
  auto* node_cmd = app.add_subcommand("node", "VASP node daemon");
  node_cmd->require_subcommand(1);
  std::string config_path;
  auto* node_run = node_cmd->add_subcommand("run", "run the node");
  node_run->add_option("--config", config_path)->required();

  // ---- transfer ---------------------------------------------------------
  auto* transfer = app.add_subcommand("transfer", "Step 1 operations");
  transfer->require_subcommand(1);
  int ops_port = 0;
  std::string customer_id, ben_asset, ben_address, asset, amount, session_id;
  auto* t_submit = transfer->add_subcommand("submit", "submit a transfer");
  t_submit->add_option("--ops-port", ops_port)->required();
  t_submit->add_option("--customer", customer_id)->required();
  t_submit->add_option("--asset", asset)->required();
  t_submit->add_option("--amount", amount)->required();
  t_submit->add_option("--beneficiary-address", ben_address)->required();
  t_submit->add_option("--beneficiary-asset", ben_asset);
  auto* t_status = transfer->add_subcommand("status", "query a session");
  t_status->add_option("--ops-port", ops_port)->required();
  t_status->add_option("--session", session_id)->required();

  // ---- flag (Step 2) ----------------------------------------------------
  auto* flag = app.add_subcommand("flag", "request additional information");
  std::string entry_hash, reason = "STR", request_id;
  flag->add_option("--ops-port", ops_port)->required();
  flag->add_option("--entry-hash", entry_hash);
  flag->add_option("--reason", reason);
  flag->add_option("--request", request_id);

  // ---- ledger -----------------------------------------------------------
  auto* ledger = app.add_subcommand("ledger", "inspect channel ledgers");
  ledger->require_subcommand(1);
  std::string data_dir, channel_arg, file_a, file_b;
  auto* l_verify = ledger->add_subcommand("verify", "verify chains on disk");
  l_verify->add_option("--data-dir", data_dir)->required();
  l_verify->add_option("--registry", registry_path)->required();
  l_verify->add_option("--channel", channel_arg);
  auto* l_show = ledger->add_subcommand("show", "print channel entries");
  l_show->add_option("--file", file_a)->required();
  auto* l_diff = ledger->add_subcommand("diff", "compare two replicas");
  l_diff->add_option("--a", file_a)->required();
  l_diff->add_option("--b", file_b)->required();

  // ---- scenario ---------------------------------------------------------
  auto* scenario = app.add_subcommand("scenario", "deterministic simulation");
  scenario->require_subcommand(1);
  std::string scenario_path, out_dir = "scenario-out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  auto* s_run = scenario->add_subcommand("run", "run a scenario file");
  s_run->add_option("path", scenario_path)->required();
  auto* seed_opt = s_run->add_option("--seed", seed);
  s_run->add_option("--out", out_dir);

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;

  try {
    if (auth_init->parsed()) {
      tr::KeyPair key = tr::KeyPair::generate();
      tr::save_key_file(authority_key_path, key);
      tr::Registry(key.public_key()).save(registry_path);
      return emit({{"ok", true}, {"authority_pk", key.public_key().hex()}},
                  "authority initialized; registry at " + registry_path, true);
    }

    if (auth_issue->parsed()) {
      tr::KeyPair authority = tr::load_key_file(authority_key_path);
      tr::Registry registry = tr::Registry::load(registry_path);
      tr::PublicKey pk;
      if (!issue_pubkey.empty()) {
        pk = tr::PublicKey::parse(issue_pubkey);
      } else if (!issue_key_out.empty()) {
        tr::KeyPair vasp_key = tr::KeyPair::generate();
        tr::save_key_file(issue_key_out, vasp_key);
        pk = vasp_key.public_key();
      } else {
        return emit_error("need --public-key or --vasp-key-out");
      }
      auto cred = registry.issue(
          authority, tr::VaspId{issue_vasp}, pk,
          issue_name.empty() ? issue_vasp : issue_name,
          std::time(nullptr), issue_days);
      registry.save(registry_path);
      return emit({{"ok", true}, {"credential", cred}},
                  "issued credential for " + issue_vasp, true);
    }

    if (auth_revoke->parsed()) {
      tr::load_key_file(authority_key_path);  // insist the operator holds it
      tr::Registry registry = tr::Registry::load(registry_path);
      registry.revoke(tr::VaspId{revoke_vasp});
      registry.save(registry_path);
      return emit({{"ok", true}, {"revoked", revoke_vasp}},
                  "revoked " + revoke_vasp, true);
    }

    if (node_run->parsed()) {
      tr::NodeConfig config = tr::load_node_config(config_path);
      tr::NodeServer server(std::move(config));
      server.start();
      std::cout << tr::canonical_bytes(
                       {{"ok", true}, {"listening", true}})
                << "\nnode running; Ctrl-C to stop\n"
                << std::flush;
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop)
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
      return 0;
    }

    if (t_submit->parsed()) {
      if (ben_asset.empty()) ben_asset = asset;
      tr::OpsClient ops(ops_port);
      tr::json r = ops.call(
          {{"op", "submit_transfer"},
           {"customer_id", customer_id},
           {"beneficiary_address",
            tr::VirtualAssetAddress{ben_asset, ben_address}},
           {"asset", asset},
           {"amount", amount}});
      bool ok = r.value("ok", false);
      return emit(r, ok ? "submitted: " + r.value("session_id", "")
                        : "submit failed", ok);
    }

    if (t_status->parsed()) {
      tr::OpsClient ops(ops_port);
      tr::json r = ops.call({{"op", "session_status"},
                             {"session_id", session_id}});
      bool ok = r.value("ok", false);
      std::string state =
          ok ? r.at("status").value("state", "?") : std::string("error");
      return emit(r, "session " + session_id + ": " + state, ok);
    }

    if (flag->parsed()) {
      tr::OpsClient ops(ops_port);
      if (!request_id.empty()) {
        tr::json r = ops.call({{"op", "additional_info"},
                               {"request_id", request_id}});
        bool ok = r.value("ok", false);
        return emit(r,
                    r.value("available", false)
                        ? "real name information available"
                        : "pending",
                    ok);
      }
      if (entry_hash.empty()) return emit_error("need --entry-hash or --request");
      tr::json r = ops.call(
          {{"op", "flag"}, {"entry_hash", entry_hash}, {"reason", reason}});
      bool ok = r.value("ok", false);
      return emit(r, ok ? "request sent: " + r.value("request_id", "")
                        : "flag failed", ok);
    }

    if (l_verify->parsed()) {
      tr::Registry registry = tr::Registry::load(registry_path);
      tr::json channels = tr::json::array();
      bool all_ok = true;
      const std::string dir = data_dir + "/channels";
      std::vector<fs::path> files;
      if (!channel_arg.empty()) {
        files.push_back(dir + "/" + channel_arg + ".jsonl");
      } else if (fs::exists(dir)) {
        for (const auto& e : fs::directory_iterator(dir))
          if (e.path().extension() == ".jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
      }
      for (const auto& p : files) {
        tr::ChainReport report = tr::verify_channel_file(p.string(), registry);
        tr::json cj{{"channel", p.stem().string()}, {"report", report}};
        channels.push_back(cj);
        all_ok = all_ok && report.ok;
      }
      return emit({{"ok", all_ok}, {"channels", channels}},
                  all_ok ? "all chains verify" : "verification FAILED",
                  all_ok);
    }

    if (l_show->parsed()) {
      auto entries = tr::ChannelLedger::load_file(file_a);
      for (const auto& e : entries)
        std::cout << tr::canonical_bytes(tr::json(e)) << "\n";
      std::cout << entries.size() << " entries\n";
      return 0;
    }

    if (l_diff->parsed()) {
      auto a = tr::ChannelLedger::load_file(file_a);
      auto b = tr::ChannelLedger::load_file(file_b);
      tr::DivergenceReport report = tr::diff_replicas(a, b);
      return emit({{"ok", report.identical}, {"report", report}},
                  report.identical
                      ? "replicas identical"
                      : "replicas diverge at seq " +
                            std::to_string(report.first_divergent_seq),
                  report.identical);
    }

    if (s_run->parsed()) {
      tr::ScenarioResult result = tr::run_scenario_file(
          scenario_path, out_dir,
          seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
      std::cout << result.transcript;
      return emit({{"ok", result.ok},
                   {"checks", result.checks},
                   {"failures", result.failures}},
                  std::to_string(result.checks - result.failures) + "/" +
                      std::to_string(result.checks) + " expectations passed",
                  result.ok);
    }
  } catch (const std::exception& e) {
    return emit_error(e.what());
  }
  return emit_error("no command");
}
