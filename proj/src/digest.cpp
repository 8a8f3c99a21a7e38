#include "acrec/digest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "acrec/error.hpp"

namespace acrec {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256Stream {
 public:
  Sha256Stream() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest initialisation failed");
    }
  }
  void update(const void* data, std::size_t size) {
    if (EVP_DigestUpdate(ctx_.get(), data, size) != 1) throw Error("sha256: update failed");
  }
  Sha256 finish() {
    Sha256 out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1 || len != out.size()) {
      throw Error("sha256: finalisation failed");
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

Sha256 sha256(std::span<const std::uint8_t> bytes) {
  Sha256Stream s;
  s.update(bytes.data(), bytes.size());
  return s.finish();
}

Sha256 sha256(std::string_view text) {
  Sha256Stream s;
  s.update(text.data(), text.size());
  return s.finish();
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::string digest_string(std::string_view text) { return "sha256:" + to_hex(sha256(text)); }

std::string blob_digest(std::span<const std::uint8_t> content) {
  Sha256Stream s;
  const std::string header = "blob " + std::to_string(content.size());
  s.update(header.data(), header.size() + 1);  // includes the terminating NUL
  s.update(content.data(), content.size());
  return "sha256:" + to_hex(s.finish());
}

}  // namespace acrec
