#pragma once

// Command-line front end: problem specs in, JSON reports and CSV arrays out.
//
// Exit codes: 0 pass, 1 mathematical rejection, 2 input or validation error.
// Reports are deterministic: keys sorted, floats printed with 17 significant
// digits, no timestamps.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "symbc/boundary.hpp"
#include "symbc/connection.hpp"
#include "symbc/errors.hpp"
#include "symbc/nonlinear.hpp"
#include "symbc/symplin.hpp"

namespace symbc::cli {

using json = nlohmann::json;

inline constexpr const char* tool_name = "symbc-cli";
inline constexpr const char* tool_version = "1.0.0";

enum exit_code : int { pass = 0, rejected = 1, bad_input = 2 };

// ---------------------------------------------------------------------------
// Output formatting

inline std::string format_double(double v) {
    if (std::isnan(v)) return "\"nan\"";
    if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    // Keep doubles recognizable as floats on read-back.
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

namespace detail {
inline void emit(const json& j, std::ostream& out, int indent) {
    const std::string pad(2 * (indent + 1), ' ');
    const std::string close(2 * indent, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out << "{}";
                return;
            }
            // nlohmann::json objects are std::map-backed, so iteration is key-sorted.
            out << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out << ",\n";
                first = false;
                out << pad << json(it.key()).dump() << ": ";
                emit(it.value(), out, indent + 1);
            }
            out << "\n" << close << "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out << "[]";
                return;
            }
            bool nested = false;
            for (const auto& v : j) nested = nested || v.is_object();
            out << (nested ? "[\n" + pad : "[");
            bool first = true;
            for (const auto& v : j) {
                if (!first) out << (nested ? ",\n" + pad : ", ");
                first = false;
                emit(v, out, indent + 1);
            }
            out << (nested ? "\n" + close + "]" : "]");
            return;
        }
        case json::value_t::number_float: out << format_double(j.get<double>()); return;
        default: out << j.dump(); return;
    }
}
}  // namespace detail

/// Canonical JSON text of a report.
inline std::string to_canonical(const json& j) {
    std::ostringstream out;
    detail::emit(j, out, 0);
    out << "\n";
    return out.str();
}

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw error("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Schema validation with JSON-pointer error locations

class schema_error : public std::runtime_error {
public:
    schema_error(const std::string& pointer, const std::string& what)
        : std::runtime_error((pointer.empty() ? "/" : pointer) + ": " + what), pointer_(pointer.empty() ? "/" : pointer) {}
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

/// A read-only view of one node of the spec document and its JSON pointer.
class Node {
public:
    Node(const json& j, std::string ptr) : j_(&j), ptr_(std::move(ptr)) {}

    const json& raw() const { return *j_; }
    const std::string& pointer() const { return ptr_; }
    [[noreturn]] void fail(const std::string& what) const { throw schema_error(ptr_, what); }

    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    Node at(const std::string& key) const {
        if (!j_->is_object()) fail("expected an object");
        if (!j_->contains(key)) throw schema_error(child_ptr(key), "required field is missing");
        return {j_->at(key), child_ptr(key)};
    }
    std::optional<Node> find(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return Node{j_->at(key), child_ptr(key)};
    }
    Node operator[](std::size_t i) const {
        if (!j_->is_array() || i >= j_->size()) fail("index out of range");
        return {j_->at(i), ptr_ + "/" + std::to_string(i)};
    }
    std::size_t size() const {
        if (!j_->is_array()) fail("expected an array");
        return j_->size();
    }

    void only_keys(std::initializer_list<const char*> allowed) const {
        if (!j_->is_object()) fail("expected an object");
        for (auto it = j_->begin(); it != j_->end(); ++it) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || it.key() == a;
            if (!ok) throw schema_error(child_ptr(it.key()), "unknown field");
        }
    }

    double number() const {
        if (!j_->is_number()) fail("expected a number");
        const double v = j_->get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }
    double number_or(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }

    int integer(int lo, int hi) const {
        if (!j_->is_number_integer()) fail("expected an integer");
        const auto v = j_->get<long long>();
        if (v < lo || v > hi) fail("expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(v);
    }
    int integer_or(const std::string& key, int fallback, int lo, int hi) const {
        return has(key) ? at(key).integer(lo, hi) : fallback;
    }

    std::string string() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }

    Vector vector(std::optional<int> len = std::nullopt) const {
        const std::size_t n = size();
        if (len && static_cast<int>(n) != *len) fail("expected an array of length " + std::to_string(*len));
        Vector v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = (*this)[i].number();
        return v;
    }

    /// Array of rows; every row must have `cols` entries when given.
    Matrix matrix(std::optional<int> cols = std::nullopt) const {
        const std::size_t r = size();
        if (r == 0) fail("expected a non-empty array of rows");
        const int c = cols ? *cols : static_cast<int>((*this)[0].size());
        Matrix m(static_cast<Eigen::Index>(r), c);
        for (std::size_t i = 0; i < r; ++i) m.row(static_cast<Eigen::Index>(i)) = (*this)[i].vector(c).transpose();
        return m;
    }

private:
    std::string child_ptr(const std::string& key) const {
        std::string esc;
        for (char ch : key) {
            if (ch == '~') esc += "~0";
            else if (ch == '/') esc += "~1";
            else esc += ch;
        }
        return ptr_ + "/" + esc;
    }

    const json* j_;
    std::string ptr_;
};

// ---------------------------------------------------------------------------
// Tolerances

struct Tolerance {
    double value;
    double floor;
    const char* meaning;
};

inline std::map<std::string, Tolerance> default_tolerances() {
    return {
        {"verdict", {boundary::verdict_tol, 1e-13, "Calkin pairing and route-agreement bound"}},
        {"conservation", {1e-8, 1e-14, "transport drift bound relative to 1 + frame pairing magnitude"}},
        {"ray", {connection::ray_tol, 1e-12, "frame-field tangency and isotropy bound"}},
        {"newton", {1e-10, 1e-14, "relative Newton residual"}},
        {"cert", {nonlinear::cert_tol, 1e-12, "BVP certificate residual bound"}},
    };
}

/// Parses "name=value" overrides; each must be a known name and lie in [floor, 1e-2].
inline std::map<std::string, Tolerance> apply_overrides(const std::vector<std::string>& overrides) {
    auto tols = default_tolerances();
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw schema_error("/--tol", "override '" + o + "' is not of the form name=value");
        const std::string name = o.substr(0, eq);
        auto it = tols.find(name);
        if (it == tols.end()) throw schema_error("/--tol/" + name, "unknown tolerance");
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(o.substr(eq + 1), &used);
            if (used != o.size() - eq - 1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw schema_error("/--tol/" + name, "value is not a number");
        }
        if (!(v >= it->second.floor) || !(v <= 1e-2))
            throw schema_error("/--tol/" + name, "value " + o.substr(eq + 1) + " outside [" +
                                                     format_double(it->second.floor) + ", 0.01]");
        it->second.value = v;
    }
    return tols;
}

// ---------------------------------------------------------------------------
// Catalog of named objects

inline json list_presets() {
    json c;
    c["boundary_conditions"] = {
        {"dirichlet", {{"params", json::array()}, {"rows", "u(0) = 0, u(1) = 0"}}},
        {"neumann", {{"params", json::array()}, {"rows", "u'(0) = 0, u'(1) = 0"}}},
        {"periodic", {{"params", json::array()}, {"rows", "u(0) = u(1), u'(0) = u'(1)"}}},
        {"antiperiodic", {{"params", json::array()}, {"rows", "u(0) = -u(1), u'(0) = -u'(1)"}}},
        {"robin", {{"params", {"alpha", "beta"}}, {"rows", "alpha u(0) - u'(0) = 0, beta u(1) - u'(1) = 0"}}},
        {"initial", {{"params", json::array()}, {"rows", "u(0) = 0, u'(0) = 0"}}},
        {"sine-cubic",
         {{"params", {"c0", "c1"}},
          {"rows", "u'(0) - sin u(0) = c0, u'(1) - u(1)^3 = c1"},
          {"commands", {"bvp"}}}},
    };
    c["nonlinearities"] = {
        {"cubic", {{"g", "u^3"}}},
        {"sine", {{"g", "sin u"}}},
        {"linear", {{"g", "u"}}},
    };
    c["form_fields"] = {
        {"canonical", {{"params", {"m"}}, {"omega", "Omega_can = [[0, I], [-I, 0]]"}}},
        {"scalar-scaled",
         {{"params", {"m", "c0", "lin", "quad", "radius"}},
          {"omega", "(c0 + lin.x + quad.(x*x)) Omega_can; closed only for m = 1 or constant alpha"}}},
    };
    c["forcings"] = {
        {"constant", {{"params", {"value"}}, {"f", "value"}}},
        {"sine-mode", {{"params", {"k", "amplitude"}}, {"f", "amplitude sin(k pi t)"}}},
        {"cos-cubic", {{"params", json::array()}, {"f", "cos t + cos^3 t"}}},
        {"samples", {{"params", {"values"}}, {"f", "grid values, one per node"}}},
    };
    c["commands"] = {"classify", "transport", "bvp", "defect", "calkin", "frames"};
    return c;
}

// ---------------------------------------------------------------------------
// Payload readers

inline Matrix read_linear_bc(const Node& bc) {
    if (bc.raw().is_string()) {
        const std::string name = bc.string();
        if (name == "dirichlet") return boundary::presets::dirichlet();
        if (name == "neumann") return boundary::presets::neumann();
        if (name == "periodic") return boundary::presets::periodic();
        if (name == "antiperiodic") return boundary::presets::antiperiodic();
        if (name == "initial") return boundary::presets::initial();
        if (name == "robin") bc.fail("preset 'robin' needs parameters: {\"preset\": \"robin\", \"alpha\": a, \"beta\": b}");
        bc.fail("unknown boundary-condition preset '" + name + "'");
    }
    if (bc.has("theta")) {
        bc.only_keys({"theta", "rhs"});
        return bc.at("theta").matrix(4);
    }
    const Node preset = bc.at("preset");
    const std::string name = preset.string();
    if (name == "robin") {
        bc.only_keys({"preset", "alpha", "beta", "rhs"});
        return boundary::presets::robin(bc.at("alpha").number(), bc.at("beta").number());
    }
    bc.only_keys({"preset", "rhs"});
    return read_linear_bc(preset);
}

inline nonlinear::Nonlinearity read_nonlinearity(const Node& n) {
    const std::string name = n.string();
    if (name == "cubic") return nonlinear::cubic();
    if (name == "sine") return nonlinear::sine();
    if (name == "linear") return {[](double u) { return u; }, [](double) { return 1.0; }};
    n.fail("unknown nonlinearity '" + name + "' (expected cubic, sine or linear)");
}

inline connection::FormField read_field(const Node& f) {
    if (f.raw().is_string()) f.fail("form field needs an object with \"name\" and \"m\"");
    const std::string name = f.at("name").string();
    const int m = f.at("m").integer(1, 8);
    if (name == "canonical") {
        f.only_keys({"name", "m"});
        return connection::constant_field(standard_form(m));
    }
    if (name == "scalar-scaled") {
        f.only_keys({"name", "m", "c0", "lin", "quad", "radius"});
        connection::DiagonalQuadratic alpha;
        alpha.c0 = f.number_or("c0", 1.0);
        alpha.lin = f.has("lin") ? f.at("lin").vector(2 * m) : Vector::Zero(2 * m);
        alpha.quad = f.has("quad") ? f.at("quad").vector(2 * m) : Vector::Zero(2 * m);
        const double radius = f.number_or("radius", std::numeric_limits<double>::infinity());
        if (!(radius > 0.0)) f.at("radius").fail("radius must be positive");
        auto field = connection::scalar_scaled_field(m, alpha, radius);
        field.require_closed();
        return field;
    }
    f.at("name").fail("unknown form field '" + name + "' (expected canonical or scalar-scaled)");
}

inline boundary::TestFunction read_function(const Node& f) {
    f.only_keys({"poly", "trig"});
    if (!f.has("poly") && !f.has("trig")) f.fail("function needs \"poly\" and/or \"trig\" terms");
    std::vector<double> coeffs;
    if (auto p = f.find("poly")) {
        const Vector c = p->vector();
        coeffs.assign(c.data(), c.data() + c.size());
    }
    const boundary::TestFunction poly = boundary::polynomial(coeffs.empty() ? std::vector<double>{0.0} : coeffs);
    struct Wave {
        double amp, freq, phase;
    };
    std::vector<Wave> waves;
    if (auto t = f.find("trig")) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            const Vector w = (*t)[i].vector(3);
            waves.push_back({w(0), w(1), w(2)});
        }
    }
    // Each trig term is amp * sin(freq t + phase).
    return {[poly, waves](double t) {
                double s = poly.u(t);
                for (const auto& w : waves) s += w.amp * std::sin(w.freq * t + w.phase);
                return s;
            },
            [poly, waves](double t) {
                double s = poly.du(t);
                for (const auto& w : waves) s += w.amp * w.freq * std::cos(w.freq * t + w.phase);
                return s;
            },
            [poly, waves](double t) {
                double s = poly.ddu(t);
                for (const auto& w : waves) s -= w.amp * w.freq * w.freq * std::sin(w.freq * t + w.phase);
                return s;
            }};
}

inline Vector read_forcing(const Node& f, const nonlinear::ModelOperator& op) {
    if (f.raw().is_string()) {
        const std::string name = f.string();
        if (name == "cos-cubic") return op.sample([](double t) { return std::cos(t) + std::pow(std::cos(t), 3); });
        f.fail("forcing '" + name + "' needs an object with parameters, or is unknown");
    }
    const std::string name = f.at("name").string();
    if (name == "constant") {
        f.only_keys({"name", "value"});
        const double c = f.at("value").number();
        return Vector::Constant(op.n(), c);
    }
    if (name == "sine-mode") {
        f.only_keys({"name", "k", "amplitude"});
        const int k = f.at("k").integer(1, 1000);
        const double a = f.number_or("amplitude", 1.0);
        return op.sample([=](double t) { return a * std::sin(k * std::numbers::pi * t); });
    }
    if (name == "cos-cubic") {
        f.only_keys({"name"});
        return read_forcing(f.at("name"), op);
    }
    if (name == "samples") {
        f.only_keys({"name", "values"});
        return f.at("values").vector(op.n());
    }
    f.at("name").fail("unknown forcing '" + name + "'");
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
    std::map<std::string, Tolerance> tolerances;
    std::filesystem::path out_dir;
};

struct Outcome {
    json report;
    int code = pass;
};

inline json subspace_class_json(const SubspaceClass& c) {
    return {{"kind", std::string(to_string(c.kind))},
            {"dim", c.dim},
            {"isotropy_residual", c.isotropy_residual},
            {"coisotropy_residual", c.coisotropy_residual}};
}

inline void write_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw schema_error("/--out", "cannot write " + path.string());
    out << header << "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << "\n";
    }
}

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline Outcome cmd_classify(const Node& p, const Context&) {
    const Matrix theta = read_linear_bc(p);
    if (theta.rows() > 4) p.fail("Theta has more than 4 rows");
    const boundary::BcVerdict v = boundary::classify_bc(theta);
    Outcome o;
    o.report["verdict"] = std::string(boundary::to_string(v.kind));
    o.report["results"] = {{"theta", matrix_json(theta)}, {"rank", v.rank}, {"kernel_dim", v.kernel_dim}};
    o.report["residuals"] = {{"kernel_classification", subspace_class_json(v.kernel_class)}};
    if (v.kernel_test) o.report["residuals"]["kernel_criterion"] = subspace_class_json(*v.kernel_test);
    o.code = v.kind == boundary::BcKind::self_adjoint ? pass : rejected;
    return o;
}

inline Outcome cmd_transport(const Node& p, const Context& ctx) {
    p.only_keys({"field", "points", "vectors", "steps"});
    const auto field = read_field(p.at("field"));
    const Node pts = p.at("points");
    std::vector<Vector> points;
    for (std::size_t i = 0; i < pts.size(); ++i) points.push_back(pts[i].vector(field.dim));
    if (points.size() < 2) pts.fail("need at least two points");
    const Matrix vecs = p.at("vectors").matrix(field.dim).transpose();
    const int steps = p.integer_or("steps", 1000, 1, 10'000'000);
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!field.in_domain(points[i])) pts[i].fail("point lies outside the chart domain");

    const auto res = connection::transport_polyline(field, points, vecs, steps);
    const double tol = ctx.tolerances.at("conservation").value;
    const bool ok = res.report.max_drift <= tol * (1.0 + res.report.scale);

    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index j = 0; j < vecs.cols(); ++j)
        for (Eigen::Index i = 0; i < vecs.rows(); ++i)
            rows.push_back({std::to_string(j), std::to_string(i), csv_num(vecs(i, j)), csv_num(res.frame.vectors(i, j))});
    const auto csv = ctx.out_dir / "transport_frame.csv";
    write_csv(csv, "vector,component,initial,final", rows);

    Outcome o;
    o.report["verdict"] = ok ? "conserved" : "drift_exceeds_tolerance";
    o.report["results"] = {{"steps_total", res.report.steps}, {"end_point", matrix_json(res.frame.base.transpose())}};
    o.report["residuals"] = {{"max_drift", res.report.max_drift},
                             {"pairing_scale", res.report.scale},
                             {"closedness_defect", field.closedness_defect()}};
    o.report["files"] = {{"frame_csv", csv.string()}};
    o.code = ok ? pass : rejected;
    return o;
}

struct BvpBc {
    nonlinear::NonlinearBC bc;
    json description;
};

inline BvpBc read_bvp_bc(const Node& bc) {
    if (bc.raw().is_object() && bc.has("preset") && bc.at("preset").raw() == "sine-cubic") {
        bc.only_keys({"preset", "c0", "c1"});
        const double c0 = bc.at("c0").number();
        const double c1 = bc.at("c1").number();
        nonlinear::NonlinearBC out{
            [c0, c1](const Eigen::Vector4d& e) {
                return Eigen::Vector2d(e(1) - std::sin(e(0)) - c0, e(3) - e(2) * e(2) * e(2) - c1);
            },
            [](const Eigen::Vector4d& e) {
                nonlinear::Jacobian24 j;
                j << -std::cos(e(0)), 1, 0, 0, 0, 0, -3 * e(2) * e(2), 1;
                return j;
            }};
        return {out, {{"preset", "sine-cubic"}, {"c0", c0}, {"c1", c1}}};
    }
    const Matrix theta = read_linear_bc(bc);
    if (theta.rows() != 2) bc.fail("a BVP needs exactly two boundary rows");
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    if (bc.raw().is_object() && bc.has("rhs")) rhs = bc.at("rhs").vector(2);
    return {nonlinear::linear_bc(theta, rhs), {{"theta", matrix_json(theta)}, {"rhs", {rhs(0), rhs(1)}}}};
}

inline json certificate_json(const nonlinear::BvpCertificate& c) {
    json samples = json::array();
    for (const auto& s : c.lsa.samples)
        samples.push_back({{"trace", {s.trace(0), s.trace(1), s.trace(2), s.trace(3)}},
                           {"rank", s.rank},
                           {"product_residual", s.product_residual},
                           {"kernel_kind", std::string(to_string(s.kernel_kind))},
                           {"passes", s.passes}});
    return {{"newton_converged", c.newton_converged},
            {"iterations", c.iterations},
            {"residual_history", c.residual_history},
            {"lsa_passes", c.lsa.passes},
            {"lsa_min_rank", c.lsa.min_rank},
            {"lsa_samples", samples},
            {"locally_self_adjoint", c.locally_self_adjoint},
            {"note", c.note}};
}

inline Outcome cmd_bvp(const Node& p, const Context& ctx) {
    p.only_keys({"n", "g", "bc", "f", "max_iterations"});
    const int n = p.at("n").integer(8, 1 << 16);
    const nonlinear::ModelOperator op(n, read_nonlinearity(p.at("g")));
    const BvpBc bc = read_bvp_bc(p.at("bc"));
    const Vector f = read_forcing(p.at("f"), op);
    nonlinear::NewtonOptions opts;
    opts.tol = ctx.tolerances.at("newton").value;
    opts.cert_tol = ctx.tolerances.at("cert").value;
    opts.max_iterations = p.integer_or("max_iterations", opts.max_iterations, 1, 1000);

    Outcome o;
    o.report["results"] = {{"n", n}, {"bc", bc.description}};
    try {
        const auto sol = nonlinear::certified_solve(op, bc.bc, f, opts);
        std::vector<std::vector<std::string>> rows;
        for (int i = 0; i < n; ++i) rows.push_back({csv_num(sol.t(i)), csv_num(sol.u(i))});
        const auto csv = ctx.out_dir / "bvp_solution.csv";
        write_csv(csv, "t,u", rows);
        const auto& c = sol.certificate;
        o.report["verdict"] = c.locally_self_adjoint ? "locally_self_adjoint" : "not_locally_self_adjoint";
        o.report["certificate"] = certificate_json(c);
        o.report["residuals"] = {{"final_residual", c.residual_history.back()},
                                 {"lsa_max_product_residual", c.lsa.max_product_residual},
                                 {"green_residual", c.green_residual},
                                 {"symmetry_defect", c.symmetry_defect},
                                 {"kernel_pairing", c.kernel_pairing}};
        o.report["files"] = {{"solution_csv", csv.string()}};
        o.code = c.locally_self_adjoint ? pass : rejected;
    } catch (const no_convergence& e) {
        o.report["verdict"] = "no_convergence";
        o.report["message"] = e.what();
        o.report["residuals"] = {{"residual_history", e.history()}};
        o.code = rejected;
    }
    return o;
}

inline Outcome cmd_defect(const Node& p, const Context&) {
    Outcome o;
    if (p.has("matrix")) {
        p.only_keys({"matrix"});
        const Matrix a = p.at("matrix").matrix();
        if (a.rows() != a.cols()) p.at("matrix").fail("matrix must be square");
        const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * (1.0 + a.cwiseAbs().maxCoeff())) p.at("matrix").fail("matrix must be symmetric");
        Matrix g(2 * a.rows(), a.rows());
        g << Matrix::Identity(a.rows(), a.rows()), a;
        const Subspace graph(g);
        const int d = graph_defect(graph, graph);
        o.report["verdict"] = "defect_computed";
        o.report["results"] = {{"defect", d}, {"min_graph_dim", graph.dim()}, {"max_graph_dim", graph.dim()}};
        o.report["residuals"] = {{"nesting_excess", graph.excess(graph)}, {"symmetry_defect", asym}};
        return o;
    }
    p.only_keys({"n", "g", "base"});
    const int n = p.at("n").integer(8, 512);
    const auto nl = p.has("g") ? read_nonlinearity(p.at("g")) : nonlinear::linear_zero();
    const nonlinear::ModelOperator op(n, nl);
    const Vector x = p.has("base") ? read_forcing(p.at("base"), op) : Vector::Zero(n);
    const auto [mn, mx] = nonlinear::discrete_graphs(op, x);
    const int d = graph_defect(mn, mx);
    o.report["verdict"] = "defect_computed";
    o.report["results"] = {{"defect", d}, {"min_graph_dim", mn.dim()}, {"max_graph_dim", mx.dim()}, {"n", n}};
    o.report["residuals"] = {{"nesting_excess", mx.excess(mn)}};
    return o;
}

inline Outcome cmd_calkin(const Node& p, const Context& ctx) {
    p.only_keys({"functions", "quad_nodes"});
    const Node fs = p.at("functions");
    std::vector<boundary::TestFunction> vs;
    for (std::size_t i = 0; i < fs.size(); ++i) vs.push_back(read_function(fs[i]));
    if (vs.empty()) fs.fail("need at least one function");
    if (vs.size() > 2) fs.fail("at most 2 functions (the defect of -d^2/dt^2 is 2)");
    const int nodes = p.integer_or("quad_nodes", boundary::default_quad_nodes, 2, 4096);
    const auto v = boundary::calkin_check(vs, {}, nodes, ctx.tolerances.at("verdict").value);
    Outcome o;
    o.report["verdict"] = v.passes() ? "calkin_conditions_hold" : "rejected";
    o.report["results"] = {{"independent", v.independent},
                           {"isotropic", v.isotropic},
                           {"both_routes_agree", v.both_routes_agree},
                           {"trace_rank", v.trace_rank},
                           {"failed_clause", v.failed_clause},
                           {"induced_condition", matrix_json(v.induced_condition)}};
    if (v.passes()) {
        const auto bc = boundary::classify_bc(v.induced_condition);
        o.report["results"]["induced_condition_kind"] = std::string(boundary::to_string(bc.kind));
    }
    o.report["residuals"] = {{"max_pairing_quadrature", v.max_pairing_quadrature},
                             {"max_pairing_trace", v.max_pairing_trace},
                             {"max_route_gap", v.max_route_gap}};
    o.code = v.passes() ? pass : rejected;
    return o;
}

inline Outcome cmd_frames(const Node& p, const Context& ctx) {
    p.only_keys({"field", "lagrangian", "complement", "points", "steps"});
    const auto field = read_field(p.at("field"));
    const Matrix e = p.at("lagrangian").matrix(field.dim).transpose();
    const Matrix f0 = p.at("complement").matrix(field.dim).transpose();
    const Node pts = p.at("points");
    std::vector<Vector> points;
    for (std::size_t i = 0; i < pts.size(); ++i) points.push_back(pts[i].vector(field.dim));
    const int steps = p.integer_or("steps", 1000, 1, 10'000'000);
    if (e.cols() != field.dim / 2) p.at("lagrangian").fail("need exactly m basis vectors");
    if (f0.cols() != field.dim / 2) p.at("complement").fail("need exactly m basis vectors");
    if (linalg::numerical_rank(e) != e.cols()) p.at("lagrangian").fail("basis vectors are dependent");
    const double tol = ctx.tolerances.at("ray").value;
    const auto frames = connection::lagrangian_frame_field(field, Subspace(e), f0, points, steps, tol);

    std::vector<std::vector<std::string>> rows;
    double tangency = 0.0, symp = 0.0, drift = 0.0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& fr = frames[k];
        tangency = std::max(tangency, fr.tangency_residual);
        symp = std::max(symp, fr.symplectic_residual);
        drift = std::max(drift, fr.conservation_drift);
        for (const auto& [kind, mat] : {std::pair{"e", &fr.e}, std::pair{"f", &fr.f}})
            for (Eigen::Index j = 0; j < mat->cols(); ++j)
                for (Eigen::Index i = 0; i < mat->rows(); ++i)
                    rows.push_back({std::to_string(k), kind, std::to_string(j), std::to_string(i), csv_num((*mat)(i, j))});
    }
    const auto csv = ctx.out_dir / "frames.csv";
    write_csv(csv, "point,kind,vector,component,value", rows);
    const bool ok = symp <= tol;
    Outcome o;
    o.report["verdict"] = ok ? "symplectic_frames" : "frame_defect_exceeds_tolerance";
    o.report["results"] = {{"points", static_cast<int>(frames.size())}};
    o.report["residuals"] = {{"max_tangency_residual", tangency},
                             {"max_symplectic_residual", symp},
                             {"max_conservation_drift", drift}};
    o.report["files"] = {{"frames_csv", csv.string()}};
    o.code = ok ? pass : rejected;
    return o;
}

/// Dispatches one parsed spec. Library errors are mapped to exit codes here:
/// input-shaped failures give 2, mathematical rejections give 1.
inline Outcome run(const std::string& command, const std::string& spec_text, const Context& ctx) {
    Outcome o;
    json tol_json;
    for (const auto& [name, t] : ctx.tolerances) tol_json[name] = t.value;
    const json provenance = {{"tool", tool_name},
                             {"version", tool_version},
                             {"tolerances", tol_json},
                             {"input_sha256", sha256_hex(spec_text)}};
    auto fail = [&](int code, const std::string& kind, const std::string& msg, const std::string& pointer) {
        Outcome f;
        f.code = code;
        f.report["verdict"] = code == bad_input ? "invalid_input" : "rejected";
        f.report["error"] = {{"kind", kind}, {"message", msg}};
        if (!pointer.empty()) f.report["error"]["pointer"] = pointer;
        return f;
    };
    try {
        json doc;
        try {
            doc = json::parse(spec_text);
        } catch (const json::parse_error& e) {
            throw schema_error("", std::string("malformed JSON: ") + e.what());
        }
        const Node root(doc, "");
        if (!doc.is_object()) root.fail("spec must be a JSON object");
        if (root.has("command") && root.at("command").string() != command)
            root.at("command").fail("spec is for '" + doc["command"].get<std::string>() + "', not '" + command + "'");
        doc.erase("command");
        if (command == "classify") o = cmd_classify(root, ctx);
        else if (command == "transport") o = cmd_transport(root, ctx);
        else if (command == "bvp") o = cmd_bvp(root, ctx);
        else if (command == "defect") o = cmd_defect(root, ctx);
        else if (command == "calkin") o = cmd_calkin(root, ctx);
        else if (command == "frames") o = cmd_frames(root, ctx);
        else throw schema_error("/command", "unknown command '" + command + "'");
    } catch (const schema_error& e) {
        o = fail(bad_input, "schema", e.what(), e.pointer());
    } catch (const invalid_argument& e) {
        o = fail(bad_input, "invalid_argument", e.what(), "");
    } catch (const invalid_test_function& e) {
        o = fail(bad_input, "invalid_test_function", e.what(), "");
    } catch (const trace_failure& e) {
        o = fail(bad_input, "trace_failure", e.what(), "");
    } catch (const too_many_vectors& e) {
        o = fail(bad_input, "too_many_vectors", e.what(), "");
    } catch (const out_of_domain& e) {
        o = fail(bad_input, "out_of_domain", e.what(), "");
    } catch (const error& e) {
        o = fail(rejected, "mathematical", e.what(), "");
    }
    o.report["command"] = command;
    o.report["provenance"] = provenance;
    return o;
}

/// Entry point shared by the executable and the tests. args excludes argv[0].
inline int main_with_args(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Symplectic boundary-condition toolkit"};
    app.name(tool_name);
    app.require_subcommand(1);
    std::string spec_path;
    std::string out_dir = ".";
    std::vector<std::string> tol_overrides;
    std::vector<CLI::App*> commands;
    const std::pair<const char*, const char*> subcommands[] = {
        {"classify", "classify a linear boundary condition Theta eta = 0"},
        {"transport", "parallel-transport a frame along a polyline"},
        {"bvp", "solve and certify a nonlinear boundary value problem"},
        {"defect", "defect from discrete minimal and maximal graphs"},
        {"calkin", "check Calkin conditions and emit the induced condition"},
        {"frames", "Lagrangian frame field with symplectic dual bases"}};
    for (const auto& [name, description] : subcommands) {
        auto* sub = app.add_subcommand(name, description);
        sub->add_option("--spec", spec_path, "problem spec (JSON file, '-' for stdin)")->required();
        sub->add_option("--out", out_dir, "directory for CSV output");
        sub->add_option("--tol", tol_overrides, "tolerance override name=value (repeatable)");
        commands.push_back(sub);
    }
    auto* presets = app.add_subcommand("list-presets", "print the catalog of named presets");

    std::vector<std::string> argv_store{tool_name};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return pass;
    } catch (const CLI::ParseError& e) {
        err << tool_name << ": " << e.what() << "\n";
        return bad_input;
    }

    if (presets->parsed()) {
        out << to_canonical(list_presets());
        return pass;
    }
    std::string command;
    for (auto* sub : commands)
        if (sub->parsed()) command = sub->get_name();

    Context ctx;
    ctx.out_dir = out_dir;
    try {
        ctx.tolerances = apply_overrides(tol_overrides);
    } catch (const schema_error& e) {
        err << tool_name << ": " << e.what() << "\n";
        json report = json::object();
        report["command"] = command;
        report["verdict"] = "invalid_input";
        report["error"] = {{"kind", "schema"}, {"message", e.what()}, {"pointer", e.pointer()}};
        out << to_canonical(report);
        return bad_input;
    }

    std::string text;
    if (spec_path == "-") {
        text.assign(std::istreambuf_iterator<char>(std::cin), {});
    } else {
        std::ifstream in(spec_path, std::ios::binary);
        if (!in) {
            err << tool_name << ": cannot read spec file '" << spec_path << "'\n";
            return bad_input;
        }
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const Outcome o = run(command, text, ctx);
    if (o.code == bad_input) err << tool_name << ": " << o.report["error"]["message"].get<std::string>() << "\n";
    out << to_canonical(o.report);
    return o.code;
}

}  // namespace symbc::cli
