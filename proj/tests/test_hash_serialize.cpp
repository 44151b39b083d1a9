#include <catch2/catch_amalgamated.hpp>

#include "gridstore/serialize.hpp"
#include "gridstore/sha256.hpp"

using namespace gridstore;

static Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

TEST_CASE("sha256 standard vectors") {
  CHECK(digest_hex(sha256(ascii(""))) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(digest_hex(sha256(ascii("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(digest_hex(sha256(ascii("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"))) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  Bytes million(1000000, 'a');
  CHECK(digest_hex(sha256(million)) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("sha256 incremental equals one-shot") {
  Bytes data = ascii("the quick brown fox jumps over the lazy dog, repeatedly");
  for (std::size_t split = 0; split <= data.size(); ++split) {
    Sha256 h;
    h.update(std::span<const std::uint8_t>(data.data(), split));
    h.update(std::span<const std::uint8_t>(data.data() + split, data.size() - split));
    CHECK(h.finish() == sha256(data));
  }
}

TEST_CASE("byte writer/reader round trip") {
  ByteWriter w;
  w.u8(7);
  w.u16(0xbeef);
  w.u32(0xdeadbeef);
  w.u64(0x0123456789abcdefULL);
  w.bytes(ascii("payload"));
  w.str("name");
  Bytes buf = w.take();

  ByteReader r{std::span<const std::uint8_t>(buf)};
  CHECK(r.u8() == 7);
  CHECK(r.u16() == 0xbeef);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == 0x0123456789abcdefULL);
  CHECK(r.bytes() == ascii("payload"));
  CHECK(r.str() == "name");
  CHECK(r.done());
}

TEST_CASE("byte reader rejects truncated and trailing input") {
  ByteWriter w;
  w.u32(5);
  Bytes buf = w.take();
  ByteReader r{std::span<const std::uint8_t>(buf)};
  CHECK_THROWS_AS(r.u64(), DecodeError);

  ByteReader r2{std::span<const std::uint8_t>(buf)};
  r2.u16();
  CHECK_THROWS_AS(r2.expect_done(), DecodeError);
}

TEST_CASE("hex round trip") {
  Bytes b = {0x00, 0xff, 0x10, 0xab};
  CHECK(to_hex(b) == "00ff10ab");
  CHECK(from_hex("00ff10ab") == b);
  CHECK(from_hex("00FF10AB") == b);
  CHECK_THROWS_AS(from_hex("abc"), DecodeError);
  CHECK_THROWS_AS(from_hex("zz"), DecodeError);
}

TEST_CASE("little-endian layout is explicit") {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x01020304);
  Bytes buf = w.take();
  CHECK(buf == Bytes{0x02, 0x01, 0x04, 0x03, 0x02, 0x01});
}
