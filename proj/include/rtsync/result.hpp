#pragma once

#include <cassert>
#include <type_traits>
#include <utility>
#include <variant>

namespace rtsync {

// Error wrapper so that Result<T, E> can be built unambiguously even when T == E.
template <typename E>
struct Failure {
    E error;
};

template <typename E>
Failure<std::decay_t<E>> fail(E&& e) {
    return {std::forward<E>(e)};
}

// Minimal value-or-error holder. Domain operations that report errors as
// values return this; I/O and configuration loaders throw instead.
template <typename T, typename E>
class Result {
public:
    Result(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
    Result(Failure<E> failure) : storage_(std::in_place_index<1>, std::move(failure.error)) {}

    bool ok() const noexcept { return storage_.index() == 0; }
    explicit operator bool() const noexcept { return ok(); }

    T& value() & {
        assert(ok());
        return std::get<0>(storage_);
    }
    const T& value() const& {
        assert(ok());
        return std::get<0>(storage_);
    }
    T&& value() && {
        assert(ok());
        return std::get<0>(std::move(storage_));
    }

    const E& error() const {
        assert(!ok());
        return std::get<1>(storage_);
    }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, E> storage_;
};

} // namespace rtsync
