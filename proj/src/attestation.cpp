#include "dmoney/attestation.hpp"

namespace dmoney {

namespace {
void encode_statement(Encoder& e, const Attestation& a) {
    e.u8(static_cast<std::uint8_t>(a.kind))
        .u64(a.subject.lo)
        .u64(a.subject.hi)
        .u64(a.epoch)
        .u64(a.first_seq)
        .u64(a.count)
        .digest(a.root)
        .u64(a.issued_at);
}
}  // namespace

Digest Attestation::message(const Hasher& hasher) const {
    Encoder e;
    encode_statement(e, *this);
    return hasher.tagged(tag::kAttestation, e.bytes());
}

bool Attestation::same_statement(const Attestation& o) const {
    return kind == o.kind && subject == o.subject && epoch == o.epoch && first_seq == o.first_seq &&
           count == o.count && root == o.root;
}

Bytes Attestation::encode() const {
    Encoder e;
    encode_statement(e, *this);
    e.u64(signature.signer).blob(signature.bytes);
    return std::move(e).bytes();
}

Attestation Attestation::decode(ByteView in) {
    Decoder d(in);
    Attestation a;
    auto kind = d.u8();
    if (kind != 1 && kind != 2) throw Error(Errc::Malformed, "attestation kind");
    a.kind = static_cast<Kind>(kind);
    a.subject.lo = d.u64();
    a.subject.hi = d.u64();
    a.epoch = d.u64();
    a.first_seq = d.u64();
    a.count = d.u64();
    a.root = d.digest();
    a.issued_at = d.u64();
    a.signature.signer = d.u64();
    a.signature.bytes = d.blob();
    d.expect_done();
    return a;
}

Attestation attest(const SignatureScheme& scheme, KeyHandle key, Attestation a, const Hasher& hasher) {
    a.signature = sign_root(scheme, a.message(hasher), key);
    return a;
}

bool verify_attestation(const SignatureScheme& scheme, const Attestation& a, const PublicKey& key,
                        const Hasher& hasher) {
    return verify_root(scheme, a.message(hasher), a.signature, key);
}

}  // namespace dmoney
