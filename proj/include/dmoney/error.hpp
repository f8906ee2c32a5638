#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmoney {

enum class Errc {
    EmptyPayload,
    NegativeBalance,
    UnknownKey,
    EmptyTree,
    IndexOutOfRange,
    Malformed,
    NonPositiveAmount,
    InsufficientBalance,
    LimitExceeded,
    NotRegisteredPeers,
    WrongAddressee,
    PeerSuspended,
    DuplicateSequence,
    MissingCounterSignature,
    NonMonotonicKey,
    InconsistentBalance,
    InvertedRange,
    UnknownClient,
    ClientSuspended,
    UnknownTransaction,
    PendingSettlement,
    StaleProvenance,
    UnknownReporter,
    UnregisteredPair,
    NotQuiescent,
    EmptyGrid,
    BadSignature,
    PeerUnreachable,
    PartnerRootDisagreement,
    ConservationViolation,
    ManagerUnreachable,
    CorruptSnapshot,
    UnknownSubject,
    ScopeViolation,
    ScenarioParseError,
    StepLimitExceeded,
    UnknownTarget,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    explicit Error(Errc code) : std::runtime_error(std::string(to_string(code))), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace dmoney
