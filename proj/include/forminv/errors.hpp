#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forminv {

/// Raised when a coefficient, field or load evaluates to a non-finite value.
class NumericDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when a user-supplied object breaks the contract it declared
/// (a custom projection that is not idempotent, a coefficient outside its
/// declared bounds, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Linear solve failed or did not reach the requested residual.
class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, double residual, std::size_t step_index = 0)
        : std::runtime_error(what), residual_(residual), step_index_(step_index) {}

    double residual() const noexcept { return residual_; }
    std::size_t step_index() const noexcept { return step_index_; }

private:
    double residual_;
    std::size_t step_index_;
};

}  // namespace forminv
