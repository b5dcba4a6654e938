#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "travelrule/membership.hpp"
#include "test_util.hpp"

namespace tr = travelrule;

namespace {

constexpr std::int64_t kNow = 1640995200;  // 2022-01-01T00:00:00Z

struct Fixture {
  tr::KeyPair authority = tr::KeyPair::from_seed(trtest::seed_bytes(1));
  tr::KeyPair vasp_key = tr::KeyPair::from_seed(trtest::seed_bytes(2));
  tr::Registry registry{authority.public_key()};
};

}  // namespace

TEST_CASE("issuing a credential admits the member") {
  Fixture f;
  auto c = f.registry.issue(f.authority, {"alpha-ex"},
                            f.vasp_key.public_key(), "Alpha", kNow, 365);
  CHECK(f.registry.verify_credential(c, kNow));
  CHECK(f.registry.active_key_of({"alpha-ex"}, kNow) ==
        f.vasp_key.public_key());
}

TEST_CASE("duplicate issuance for a live member is rejected") {
  Fixture f;
  f.registry.issue(f.authority, {"alpha-ex"}, f.vasp_key.public_key(),
                   "Alpha", kNow, 365);
  CHECK_THROWS_AS(f.registry.issue(f.authority, {"alpha-ex"},
                                   f.vasp_key.public_key(), "Alpha", kNow, 365),
                  tr::MembershipError);
  // after revocation the id may be re-admitted with a fresh credential
  f.registry.revoke({"alpha-ex"});
  CHECK_FALSE(f.registry.active_key_of({"alpha-ex"}, kNow).has_value());
  auto c2 = f.registry.issue(f.authority, {"alpha-ex"},
                             f.vasp_key.public_key(), "Alpha", kNow, 365);
  CHECK(f.registry.verify_credential(c2, kNow));
}

TEST_CASE("tampered credential fields fail verification") {
  Fixture f;
  auto c = f.registry.issue(f.authority, {"alpha-ex"},
                            f.vasp_key.public_key(), "Alpha", kNow, 365);
  auto renamed = c;
  renamed.display_name = "Alphaa";
  CHECK_FALSE(f.registry.verify_credential(renamed, kNow));
  auto extended = c;
  extended.expires_at = tr::format_rfc3339(kNow + 86400LL * 999);
  CHECK_FALSE(f.registry.verify_credential(extended, kNow));
}

TEST_CASE("validity window is half open") {
  Fixture f;
  auto c = f.registry.issue(f.authority, {"alpha-ex"},
                            f.vasp_key.public_key(), "Alpha", kNow, 10);
  const std::int64_t expires = kNow + 86400LL * 10;
  CHECK(f.registry.verify_credential(c, kNow));           // issued_at inclusive
  CHECK(f.registry.verify_credential(c, expires - 1));
  CHECK_FALSE(f.registry.verify_credential(c, expires));  // expires_at exclusive
  CHECK_FALSE(f.registry.verify_credential(c, kNow - 1));
}

TEST_CASE("revocation takes effect immediately") {
  Fixture f;
  auto c = f.registry.issue(f.authority, {"alpha-ex"},
                            f.vasp_key.public_key(), "Alpha", kNow, 365);
  f.registry.revoke({"alpha-ex"});
  CHECK_FALSE(f.registry.verify_credential(c, kNow));
  CHECK_FALSE(f.registry.active_key_of({"alpha-ex"}, kNow).has_value());
  CHECK_THROWS_AS(f.registry.revoke({"ghost"}), tr::MembershipError);
}

TEST_CASE("credentials signed by other keys never verify") {
  Fixture f;
  auto c = f.registry.issue(f.authority, {"alpha-ex"},
                            f.vasp_key.public_key(), "Alpha", kNow, 365);
  std::mt19937_64 rng(77);
  for (int i = 0; i < 100; ++i) {
    tr::FixedBytes<32> seed;
    for (auto& b : seed.bytes)
      b = static_cast<std::uint8_t>(rng());
    tr::KeyPair impostor = tr::KeyPair::from_seed(seed);
    auto forged = c;
    forged.authority_sig =
        impostor.sign(tr::canonical_digest(forged.unsigned_json()).bytes);
    CHECK_FALSE(f.registry.verify_credential(forged, kNow));
  }
}

TEST_CASE("registry snapshots round trip through disk") {
  Fixture f;
  f.registry.issue(f.authority, {"alpha-ex"}, f.vasp_key.public_key(),
                   "Alpha", kNow, 365);
  tr::KeyPair key_b = tr::KeyPair::from_seed(trtest::seed_bytes(3));
  f.registry.issue(f.authority, {"beta-ex"}, key_b.public_key(), "Beta",
                   kNow, 30);
  f.registry.revoke({"beta-ex"});

  std::string path = trtest::fresh_dir("registry") + "/registry.json";
  f.registry.save(path);
  tr::Registry loaded = tr::Registry::load(path);
  CHECK(tr::canonical_bytes(loaded.to_snapshot()) ==
        tr::canonical_bytes(f.registry.to_snapshot()));
  CHECK(loaded.active_key_of({"alpha-ex"}, kNow).has_value());
  CHECK_FALSE(loaded.active_key_of({"beta-ex"}, kNow).has_value());
  CHECK(loaded.is_revoked({"beta-ex"}));
}
