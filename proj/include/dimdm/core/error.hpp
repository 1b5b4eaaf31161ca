#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dimdm {

/// Precondition or domain violation of a pure operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Failure while parsing a config, embedding or dataset file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged or broke an invariant; carries the position in the run.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t epoch, std::size_t step)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
          epoch_(epoch),
          step_(step) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t epoch_;
    std::size_t step_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DomainError(msg);
}

} // namespace detail

} // namespace dimdm
