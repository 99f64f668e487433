#include "deepgap/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "deepgap/error.hpp"

namespace deepgap {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

MdCtx new_sha256() {
  MdCtx ctx{EVP_MD_CTX_new()};
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 init failed");
  }
  return ctx;
}

void update(EVP_MD_CTX* ctx, std::string_view bytes) {
  if (EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1) {
    throw Error("sha256 update failed");
  }
}

std::string finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) {
    throw Error("sha256 final failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  auto ctx = new_sha256();
  update(ctx.get(), bytes);
  return finish(ctx.get());
}

std::string digest_files(const std::filesystem::path& root,
                         std::span<const std::filesystem::path> files) {
  auto ctx = new_sha256();
  std::array<char, 1 << 16> buf{};
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      throw DataError("cannot read " + file.string());
    }
    auto rel = std::filesystem::relative(file, root).generic_string();
    update(ctx.get(), rel);
    update(ctx.get(), std::string_view("\0", 1));
    while (in) {
      in.read(buf.data(), buf.size());
      update(ctx.get(), std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
  }
  return finish(ctx.get());
}

}  // namespace deepgap
