#pragma once

#include <sodium.h>
#include <sys/stat.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>

#include "travelrule/canonical.hpp"
#include "travelrule/hex.hpp"

namespace travelrule {

struct CryptoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoError("libsodium init failed");
}

template <std::size_t N>
struct FixedBytes {
  std::array<std::uint8_t, N> bytes{};

  bool operator==(const FixedBytes&) const = default;
  auto operator<=>(const FixedBytes&) const = default;

  std::string hex() const { return to_hex(bytes); }

  static FixedBytes from_hex(const std::string& s) {
    auto raw = travelrule::from_hex(s);
    if (raw.size() != N) throw CryptoError("bad length: expected " +
                                           std::to_string(N) + " bytes");
    FixedBytes out;
    std::copy(raw.begin(), raw.end(), out.bytes.begin());
    return out;
  }
};

struct Digest : FixedBytes<32> {
  static Digest zero() { return {}; }
  static Digest parse(const std::string& hex) {
    Digest d;
    static_cast<FixedBytes<32>&>(d) = FixedBytes<32>::from_hex(hex);
    return d;
  }
};

struct PublicKey : FixedBytes<32> {
  static PublicKey parse(const std::string& hex) {
    PublicKey k;
    static_cast<FixedBytes<32>&>(k) = FixedBytes<32>::from_hex(hex);
    return k;
  }
};

struct Signature : FixedBytes<64> {
  static Signature parse(const std::string& hex) {
    Signature s;
    static_cast<FixedBytes<64>&>(s) = FixedBytes<64>::from_hex(hex);
    return s;
  }
};

inline Digest sha256(std::span<const std::uint8_t> data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

inline Digest sha256(const std::string& data) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

class KeyPair {
 public:
  // Deterministic Ed25519 keypair from a 32-byte seed.
  static KeyPair from_seed(const FixedBytes<32>& seed) {
    ensure_sodium();
    KeyPair kp;
    kp.seed_ = seed;
    if (crypto_sign_seed_keypair(kp.public_key_.bytes.data(),
                                 kp.secret_.data(),
                                 seed.bytes.data()) != 0) {
      throw CryptoError("keypair derivation failed");
    }
    return kp;
  }

  static KeyPair generate() {
    ensure_sodium();
    FixedBytes<32> seed;
    randombytes_buf(seed.bytes.data(), seed.bytes.size());
    return from_seed(seed);
  }

  const PublicKey& public_key() const { return public_key_; }
  const FixedBytes<32>& seed() const { return seed_; }

  Signature sign(std::span<const std::uint8_t> data) const {
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, data.data(), data.size(),
                         secret_.data());
    return sig;
  }

  Signature sign(const std::string& data) const {
    return sign(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
  }

 private:
  KeyPair() = default;
  FixedBytes<32> seed_;
  PublicKey public_key_;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> secret_{};
};

inline bool verify(const PublicKey& pk, std::span<const std::uint8_t> data,
                   const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.bytes.data(), data.data(),
                                     data.size(), pk.bytes.data()) == 0;
}

inline bool verify(const PublicKey& pk, const std::string& data,
                   const Signature& sig) {
  return verify(pk,
                std::span<const std::uint8_t>(
                    reinterpret_cast<const std::uint8_t*>(data.data()),
                    data.size()),
                sig);
}

// Digest of the canonical byte form; the hashing entry point used by
// ledger entries, credentials, and message envelopes.
inline Digest canonical_digest(const json& value) {
  return sha256(canonical_bytes(value));
}

// Key file on disk: 32-byte seed as lowercase hex, one line, owner-only mode.
inline void save_key_file(const std::string& path, const KeyPair& kp) {
  {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw CryptoError("cannot write key file: " + path);
    f << kp.seed().hex() << "\n";
  }
  if (chmod(path.c_str(), S_IRUSR | S_IWUSR) != 0)
    throw CryptoError("cannot restrict key file mode: " + path);
}

inline KeyPair load_key_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CryptoError("cannot read key file: " + path);
  std::string line;
  std::getline(f, line);
  return KeyPair::from_seed(FixedBytes<32>::from_hex(line));
}

}  // namespace travelrule
