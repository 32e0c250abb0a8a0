#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace symbc {

/// Base of every failure raised by the library. Each subclass names one
/// failure mode so callers (and the CLI exit-code mapping) can tell input
/// problems apart from mathematical rejections.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class invalid_argument : public error {
public:
    using error::error;
};

class degenerate_form : public error {
public:
    degenerate_form(const std::string& what, double t = 0.0) : error(what), t_(t) {}
    /// Curve parameter (or 0 when not evaluated along a curve).
    double where() const noexcept { return t_; }

private:
    double t_;
};

class transversality_failure : public error {
public:
    using error::error;
};

class not_nested : public error {
public:
    using error::error;
};

class odd_gap : public error {
public:
    using error::error;
};

class rank_jump : public error {
public:
    using error::error;
};

class invariance_violation : public error {
public:
    using error::error;
};

class out_of_domain : public error {
public:
    using error::error;
};

class trace_failure : public error {
public:
    using error::error;
};

class too_many_vectors : public error {
public:
    using error::error;
};

class invalid_test_function : public error {
public:
    using error::error;
};

class no_convergence : public error {
public:
    no_convergence(const std::string& what, std::vector<double> history)
        : error(what), history_(std::move(history)) {}
    /// Residual norm after each Newton iteration.
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class not_locally_self_adjoint : public error {
public:
    using error::error;
};

}  // namespace symbc
