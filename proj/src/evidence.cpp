#include "sage/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sage/special.hpp"

namespace sage {

EvidenceVector::EvidenceVector(std::vector<double> evidence) : e(std::move(evidence)) {
    if (e.size() < 2) throw std::invalid_argument("EvidenceVector: need at least 2 classes");
    for (std::size_t c = 0; c < e.size(); ++c) {
        if (!(e[c] >= 0.0) || !std::isfinite(e[c])) {
            throw std::invalid_argument("EvidenceVector: component " + std::to_string(c) +
                                        " must be finite and non-negative");
        }
    }
}

MassSet MassSet::checked(std::vector<double> b, double u, double tol) {
    double s = u;
    for (std::size_t c = 0; c < b.size(); ++c) {
        if (!(b[c] >= 0.0)) {
            throw std::invalid_argument("MassSet: belief component " + std::to_string(c) +
                                        " is negative");
        }
        s += b[c];
    }
    if (!(u >= 0.0)) throw std::invalid_argument("MassSet: uncertainty is negative");
    if (std::fabs(s - 1.0) > tol) {
        throw std::invalid_argument("MassSet: masses sum to " + std::to_string(s) +
                                    ", expected 1");
    }
    return {std::move(b), u};
}

double DirichletParams::strength() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
}

MassSet masses_from_evidence(const EvidenceVector& ev) {
    const int c = ev.num_classes();
    double strength = 0.0;
    for (double e : ev.e) strength += e + 1.0;
    MassSet m;
    m.b.resize(c);
    for (int i = 0; i < c; ++i) m.b[i] = ev.e[i] / strength;
    m.u = c / strength;
    return m;
}

DirichletParams dirichlet_from_evidence(const EvidenceVector& ev) {
    DirichletParams d;
    d.alpha.reserve(ev.e.size());
    for (double e : ev.e) d.alpha.push_back(e + 1.0);
    return d;
}

DirichletParams dirichlet_from_masses(const MassSet& m) {
    if (m.u <= 0.0) {
        throw SaturationError("dirichlet_from_masses: u = " + std::to_string(m.u) +
                              " implies infinite evidence");
    }
    const double strength = m.num_classes() / m.u;
    DirichletParams d;
    d.alpha.reserve(m.b.size());
    for (double b : m.b) d.alpha.push_back(b * strength + 1.0);
    return d;
}

MassSet combine_pair(const MassSet& m1, const MassSet& m2) {
    const int c = m1.num_classes();
    if (m2.num_classes() != c) {
        throw std::invalid_argument("combine_pair: class counts differ");
    }
    // F = sum_{i != j} b1_i b2_j = (sum b1)(sum b2) - <b1, b2>
    double s1 = 0.0, s2 = 0.0, dot = 0.0;
    for (int i = 0; i < c; ++i) {
        s1 += m1.b[i];
        s2 += m2.b[i];
        dot += m1.b[i] * m2.b[i];
    }
    const double conflict = s1 * s2 - dot;
    const double denom = 1.0 - conflict;
    if (denom <= kConflictEpsilon) {
        throw ConflictError("combine_pair: total conflict, F = " + std::to_string(conflict),
                            conflict);
    }
    MassSet out;
    out.b.resize(c);
    for (int i = 0; i < c; ++i) {
        out.b[i] = (m1.b[i] * m2.b[i] + m1.b[i] * m2.u + m2.b[i] * m1.u) / denom;
    }
    out.u = m1.u * m2.u / denom;
    return out;
}

MassSet combine_all(std::span<const MassSet> ms) {
    if (ms.empty()) throw std::invalid_argument("combine_all: need at least one mass set");
    MassSet acc = ms[0];
    for (std::size_t i = 1; i < ms.size(); ++i) acc = combine_pair(acc, ms[i]);
    return acc;
}

MassSet average_masses(std::span<const MassSet> ms) {
    if (ms.empty()) throw std::invalid_argument("average_masses: need at least one mass set");
    const int c = ms[0].num_classes();
    MassSet out;
    out.b.assign(c, 0.0);
    out.u = 0.0;
    for (const MassSet& m : ms) {
        if (m.num_classes() != c) throw std::invalid_argument("average_masses: class counts differ");
        for (int i = 0; i < c; ++i) out.b[i] += m.b[i];
        out.u += m.u;
    }
    for (int i = 0; i < c; ++i) out.b[i] /= static_cast<double>(ms.size());
    out.u /= static_cast<double>(ms.size());
    return out;
}

double dirichlet_log_density(const DirichletParams& d, std::span<const double> p) {
    const std::size_t c = d.alpha.size();
    if (p.size() != c) throw std::invalid_argument("dirichlet_log_density: dimension mismatch");
    double psum = 0.0;
    for (double pc : p) {
        if (!(pc > 0.0)) {
            throw std::domain_error("dirichlet_log_density: p must be strictly inside the simplex");
        }
        psum += pc;
    }
    if (std::fabs(psum - 1.0) > 1e-9) {
        throw std::domain_error("dirichlet_log_density: p sums to " + std::to_string(psum));
    }
    double log_beta = -log_gamma(d.strength());
    double t = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        log_beta += log_gamma(d.alpha[i]);
        t += (d.alpha[i] - 1.0) * std::log(p[i]);
    }
    return t - log_beta;
}

std::pair<int, double> predict(const MassSet& m) {
    int best = 0;
    for (int i = 1; i < m.num_classes(); ++i) {
        if (m.b[i] > m.b[best]) best = i;
    }
    return {best, m.u};
}

std::vector<MassSet> parse_mass_sets(std::istream& in) {
    std::vector<MassSet> out;
    std::string line;
    int line_no = 0;
    int num_classes = -1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<double> fields;
        double v;
        while (ls >> v) fields.push_back(v);
        std::string trailing;
        ls.clear();
        if (ls >> trailing) {
            throw ConfigError("line " + std::to_string(line_no) + ": unparseable token '" +
                              trailing + "'");
        }
        if (fields.empty()) continue;  // blank line
        if (fields.size() < 3) {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected at least 3 fields (b_1 .. b_C u)");
        }
        if (num_classes < 0) {
            num_classes = static_cast<int>(fields.size()) - 1;
        } else if (static_cast<int>(fields.size()) - 1 != num_classes) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(num_classes + 1) + " fields, got " +
                              std::to_string(fields.size()));
        }
        const double u = fields.back();
        fields.pop_back();
        try {
            out.push_back(MassSet::checked(std::move(fields), u, 1e-6));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_mass_set(std::ostream& out, const MassSet& m) {
    std::ostringstream os;
    os.precision(17);
    for (double b : m.b) os << b << ' ';
    os << m.u << '\n';
    out << os.str();
}

// ---------------------------------------------------------------------------
// differentiable batched mirror
// ---------------------------------------------------------------------------

MassBatch masses_from_evidence_batch(const Tensor& evidence) {
    const Shape& s = evidence.shape();
    if (s.size() != 2) throw ShapeError("masses_from_evidence_batch expects [B,C]");
    const int c = s[1];
    Tensor strength = rowsum(evidence) + static_cast<double>(c);  // sum(e + 1) per row
    MassBatch m;
    m.b = evidence / bc_col(strength, c);
    m.u = static_cast<double>(c) / strength;
    return m;
}

MassBatch combine_pair_batch(const MassBatch& m1, const MassBatch& m2,
                             std::vector<bool>& conflicted) {
    const Shape& s = m1.b.shape();
    if (s.size() != 2 || m2.b.shape() != s) throw ShapeError("combine_pair_batch: shape mismatch");
    const int rows = s[0], c = s[1];

    Tensor prod = m1.b * m2.b;
    Tensor conflict = rowsum(m1.b) * rowsum(m2.b) - rowsum(prod);  // F per row
    Tensor denom = 1.0 - conflict;                                 // [B]

    // Flag conflicted rows and neutralize their denominator so the graph
    // stays finite; the caller zeroes their loss contribution.
    if (conflicted.size() != static_cast<std::size_t>(rows)) conflicted.assign(rows, false);
    std::vector<double> safe(denom.values());
    bool any = false;
    for (int i = 0; i < rows; ++i) {
        if (safe[i] <= kConflictEpsilon) {
            conflicted[i] = true;
            any = true;
        }
    }
    if (any) {
        // Replace by a detached safe denominator on bad rows only.
        std::vector<double> mask_keep(rows), patch(rows, 0.0);
        for (int i = 0; i < rows; ++i) {
            mask_keep[i] = conflicted[i] ? 0.0 : 1.0;
            patch[i] = conflicted[i] ? 1.0 : 0.0;
        }
        denom = denom * Tensor::from(Shape{rows}, mask_keep) + Tensor::from(Shape{rows}, patch);
    }

    MassBatch out;
    out.b = (prod + m1.b * bc_col(m2.u, c) + m2.b * bc_col(m1.u, c)) / bc_col(denom, c);
    out.u = m1.u * m2.u / denom;
    return out;
}

Tensor dirichlet_from_masses_batch(const MassBatch& m) {
    const int c = m.b.shape()[1];
    Tensor strength = static_cast<double>(c) / m.u;  // [B]
    return m.b * bc_col(strength, c) + 1.0;
}

}  // namespace sage
