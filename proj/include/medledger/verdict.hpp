#pragma once

#include <optional>
#include <utility>

namespace medledger {

// accept | reject(reason), returned by validators instead of throwing.
template <class Reason>
class Verdict {
public:
    static Verdict accept() { return Verdict{}; }
    static Verdict reject(Reason r) {
        Verdict v;
        v.reason_ = std::move(r);
        return v;
    }

    bool accepted() const { return !reason_.has_value(); }
    explicit operator bool() const { return accepted(); }
    const Reason& reason() const { return *reason_; }

private:
    std::optional<Reason> reason_;
};

}  // namespace medledger
