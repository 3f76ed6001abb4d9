#pragma once

// Canonical encoding: fixed field order, fixed-width big-endian integers,
// u32 length prefixes on variable fields, sets and maps in sorted order.
// The same bytes are hashed, signed, and sent on the wire.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "parblock/types.hpp"

namespace parblock {

class DecodeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class Writer {
  public:
    Writer& u8(std::uint8_t v);
    Writer& u32(std::uint32_t v);
    Writer& u64(std::uint64_t v);
    Writer& boolean(bool v) { return u8(v ? 1 : 0); }
    Writer& bytes(std::string_view v);
    Writer& raw(std::string_view v);
    Writer& digest(const Digest& d);

    template <class Id>
    Writer& id(Id v) { return u32(v.value); }

    const Bytes& data() const& { return buf_; }
    Bytes take() && { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

  private:
    Bytes buf_;
};

class Reader {
  public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    bool boolean();
    Bytes bytes();
    std::string_view raw(std::size_t n);
    Digest digest();

    template <class Id>
    Id id() { return Id{u32()}; }

    // Collection length, sanity-bounded by the bytes that remain.
    std::uint32_t count(std::size_t min_element_size = 1);

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }
    void expect_end() const;

  private:
    void need(std::size_t n) const;

    std::string_view data_;
    std::size_t pos_ = 0;
};

void encode(Writer& w, const Operation& op);
void encode(Writer& w, const Transaction& t);
void encode(Writer& w, const ResultRecords& r);
void encode(Writer& w, const Endorsement& e);
void encode(Writer& w, const Block& b);

Operation decode_operation(Reader& r);
Transaction decode_transaction(Reader& r);
ResultRecords decode_result(Reader& r);
Endorsement decode_endorsement(Reader& r);
Block decode_block(Reader& r);

template <class T>
Bytes canonical_bytes(const T& value) {
    Writer w;
    encode(w, value);
    return std::move(w).take();
}

// Decodes a full buffer; trailing bytes are an error.
template <class T, class F>
T decode_all(std::string_view data, F&& fn) {
    Reader r(data);
    T value = fn(r);
    r.expect_end();
    return value;
}

// Bytes covered by a client's request signature: (client, client_ts, op).
Bytes txn_signing_bytes(const Transaction& t);

// Bytes covered by an endorser's signature: everything except sig.
Bytes endorsement_signing_bytes(const Endorsement& e);

}  // namespace parblock
