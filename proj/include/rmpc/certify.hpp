#pragma once

#include <array>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rmpc/errors.hpp"
#include "rmpc/linalg.hpp"
#include "rmpc/optimizer.hpp"
#include "rmpc/problem.hpp"
#include "rmpc/sampling.hpp"

namespace rmpc {

// ---------------------------------------------------------------------------
// Regularity conditions
//
// A reduced-space control problem is regular when
//   1. the admissible controls are described by bound inequalities only,
//   2. the states carry no explicit constraints,
//   3. the state Jacobian of the equality constraints is square and
//      nonsingular wherever the constraints hold,
//   4. the control Jacobian has full rank there,
//   5. the gradients of the active bounds are linearly independent,
//   6. the states are a unique function of the controls,
//   7. the output controllability matrix is invertible, and
//   8. the objective is convex.
// Conditions 1, 2, 5, 8 hold by construction of the problem interface and are
// reported as such; 3, 4, 7 are verified at sampled controls; 6 is probed
// heuristically by restarting the state Newton solve from perturbed guesses.
// ---------------------------------------------------------------------------

enum class ConditionStatus { Pass, Fail, ByConstruction, HeuristicPass, Skipped };

inline const char* to_string(ConditionStatus s) {
    switch (s) {
        case ConditionStatus::Pass: return "pass";
        case ConditionStatus::Fail: return "fail";
        case ConditionStatus::ByConstruction: return "by-construction";
        case ConditionStatus::HeuristicPass: return "heuristic-pass";
        case ConditionStatus::Skipped: return "skipped";
    }
    return "?";
}

struct ConditionEntry {
    ConditionStatus status = ConditionStatus::Skipped;
    std::string diagnostic;
    int samples_used = 0;
    std::optional<Vector> witness_u; // present for every failure
    std::optional<Vector> witness_x;
};

struct ConditionReport {
    std::array<ConditionEntry, 8> conditions; // index i = condition i+1
    int lhs_samples = 0;
    unsigned long seed = 0;

    const ConditionEntry& condition(int number) const { return conditions[number - 1]; }

    bool all_passed() const {
        for (const auto& c : conditions)
            if (c.status == ConditionStatus::Fail) return false;
        return true;
    }

    std::vector<int> failed_conditions() const {
        std::vector<int> out;
        for (int i = 0; i < 8; ++i)
            if (conditions[i].status == ConditionStatus::Fail) out.push_back(i + 1);
        return out;
    }
};

struct ConditionCheckOptions {
    NewtonOptions newton;
    double rank_tol = 1e-10;          // relative diagonal threshold in the rank test
    double agreement_tol = 1e-6;      // relative state disagreement that fails condition 6
    int perturbation_directions = 3;  // Newton restarts per sample
};

/// Samples the control box (centre, both extreme corners, plus a Latin
/// hypercube batch) and verifies the regularity conditions at each point.
/// Failures never throw; they are recorded with a witness point.
inline ConditionReport check_conditions(const RmpcProblem& p, int n_samples = 50,
                                        unsigned long seed = 20240601UL,
                                        const ConditionCheckOptions& opts = {}) {
    if (n_samples < 1) throw InvalidArgumentError("check_conditions: need at least one sample");
    const Box box = p.control_box();
    const int n = p.control_dim();
    const int m = p.state_dim();
    const int mr = p.residual_dim();

    ConditionReport report;
    report.lhs_samples = n_samples;
    report.seed = seed;

    // conditions holding by construction of the interface
    {
        auto& c1 = report.conditions[0];
        try {
            box.validate();
            c1.status = ConditionStatus::ByConstruction;
            c1.diagnostic = "admissible controls are a finite coordinate box";
        } catch (const Error& e) {
            c1.status = ConditionStatus::Fail;
            c1.diagnostic = e.what();
        }
        auto& c2 = report.conditions[1];
        c2.status = ConditionStatus::ByConstruction;
        c2.diagnostic = "the problem interface admits no state constraints";
        auto& c5 = report.conditions[4];
        c5.status = ConditionStatus::ByConstruction;
        c5.diagnostic = "active box-bound gradients are distinct unit vectors";
        for (int i = 0; i < box.size(); ++i) {
            if (box.lower[i] == box.upper[i]) {
                c5.status = ConditionStatus::Fail;
                c5.diagnostic = "coordinate " + std::to_string(i) +
                                " has equal bounds; both bound gradients are active and dependent";
                c5.witness_u = box.lower;
            }
        }
        auto& c8 = report.conditions[7];
        if (p.objective_is_convex()) {
            c8.status = ConditionStatus::ByConstruction;
            c8.diagnostic = "objective declared convex by the problem";
        } else {
            c8.status = ConditionStatus::Fail;
            c8.diagnostic = "objective not declared convex";
        }
    }

    std::vector<Vector> samples;
    samples.push_back(box.center());
    samples.push_back(box.lower);
    samples.push_back(box.upper);
    for (auto& s : latin_hypercube(n_samples, box, seed)) samples.push_back(std::move(s));

    auto& c3 = report.conditions[2];
    auto& c4 = report.conditions[3];
    auto& c6 = report.conditions[5];
    auto& c7 = report.conditions[6];
    c3.status = c4.status = ConditionStatus::Pass;
    c6.status = ConditionStatus::HeuristicPass;
    c7.status = ConditionStatus::Pass;

    double min_pivot_seen = std::numeric_limits<double>::infinity();
    int c7_evaluated = 0;
    int c6_probes = 0, c6_unprobed = 0;
    bool c6_branch_supplied = false;

    std::mt19937_64 perturb_rng(seed ^ 0xd1b54a32d192ed03ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (const Vector& u : samples) {
        Vector x;
        try {
            x = solve_states(p, u, opts.newton).x;
        } catch (const Error& e) {
            if (c6.status != ConditionStatus::Fail) {
                c6.status = ConditionStatus::Fail;
                c6.diagnostic = std::string("no state solution found at a sampled control: ") + e.what();
                c6.witness_u = u;
            }
            continue;
        }

        // condition 3: square, nonsingular state Jacobian
        bool c3_ok_here = true;
        if (mr != m) {
            c3_ok_here = false;
            if (c3.status != ConditionStatus::Fail) {
                c3.status = ConditionStatus::Fail;
                c3.diagnostic = "state Jacobian is " + std::to_string(mr) + "x" + std::to_string(m) +
                                ", not square";
                c3.witness_u = u;
                c3.witness_x = x;
            }
        } else {
            try {
                StateJacobianFactor f(p.state_jacobian(x, u), opts.newton.pivot_tol);
                min_pivot_seen = std::min(min_pivot_seen, f.min_pivot());
            } catch (const SingularError& e) {
                c3_ok_here = false;
                if (c3.status != ConditionStatus::Fail) {
                    c3.status = ConditionStatus::Fail;
                    c3.diagnostic = e.what();
                    c3.witness_u = u;
                    c3.witness_x = x;
                }
            }
        }
        ++c3.samples_used;

        // condition 4: control Jacobian of full rank
        bool c4_ok_here = true;
        {
            const DenseMatrix b = p.control_jacobian(x, u);
            const int required = std::min(mr, n);
            const int rank = numerical_rank(b, opts.rank_tol);
            if (rank < required) {
                c4_ok_here = false;
                if (c4.status != ConditionStatus::Fail) {
                    c4.status = ConditionStatus::Fail;
                    c4.diagnostic = "control Jacobian rank " + std::to_string(rank) + " < " +
                                    std::to_string(required);
                    c4.witness_u = u;
                    c4.witness_x = x;
                }
            }
            ++c4.samples_used;
        }

        // condition 7: output controllability; defined only where 3 and 4 hold
        if (c3_ok_here && c4_ok_here) {
            try {
                const DenseMatrix t = output_controllability_matrix(p, x, u, opts.newton);
                ++c7_evaluated;
                ++c7.samples_used;
                const int rank = numerical_rank(t, opts.rank_tol);
                if (rank < n && c7.status != ConditionStatus::Fail) {
                    c7.status = ConditionStatus::Fail;
                    c7.diagnostic = "output controllability matrix rank " + std::to_string(rank) + " < " +
                                    std::to_string(n);
                    c7.witness_u = u;
                    c7.witness_x = x;
                }
            } catch (const SingularError& e) {
                if (c7.status != ConditionStatus::Fail) {
                    c7.status = ConditionStatus::Fail;
                    c7.diagnostic = e.what();
                    c7.witness_u = u;
                }
            }
        }

        // condition 6: restart Newton from perturbed guesses and require
        // agreement. Problems with a designated solution branch cannot be
        // probed this way.
        ++c6.samples_used;
        if (p.explicit_states(u)) {
            c6_branch_supplied = true;
        } else if (mr == m && c6.status != ConditionStatus::Fail) {
            const double scale_base = 1.0 + norm_inf(x);
            for (int dir = 0; dir < opts.perturbation_directions; ++dir) {
                Vector direction(m);
                double nrm = 0.0;
                for (int i = 0; i < m; ++i) {
                    direction[i] = gauss(perturb_rng);
                    nrm += direction[i] * direction[i];
                }
                nrm = std::sqrt(nrm);
                if (nrm == 0.0) continue;
                for (double& v : direction) v /= nrm;

                bool probed = false;
                for (double rel : {2.0, 0.5, 0.05, 0.005}) {
                    Vector x0 = x;
                    axpy(rel * scale_base, direction, x0);
                    try {
                        const Vector alt = solve_states(p, u, x0, opts.newton).x;
                        ++c6_probes;
                        probed = true;
                        double diff = 0.0;
                        for (int i = 0; i < m; ++i) diff = std::max(diff, std::abs(alt[i] - x[i]));
                        if (diff > opts.agreement_tol * scale_base) {
                            c6.status = ConditionStatus::Fail;
                            std::ostringstream os;
                            os << "Newton restarts disagree: state difference " << diff
                               << " from a perturbed initial guess";
                            c6.diagnostic = os.str();
                            c6.witness_u = u;
                            c6.witness_x = alt;
                        }
                        break; // largest converging perturbation is enough
                    } catch (const Error&) {
                        // restart failed from this distance; try a smaller one
                    }
                }
                if (!probed) ++c6_unprobed;
                if (c6.status == ConditionStatus::Fail) break;
            }
        }
    }

    if (c3.status == ConditionStatus::Pass) {
        std::ostringstream os;
        os << "state Jacobian nonsingular at all samples (smallest pivot " << min_pivot_seen << ")";
        c3.diagnostic = os.str();
    }
    if (c4.status == ConditionStatus::Pass) c4.diagnostic = "control Jacobian has full rank at all samples";
    if (c6.status == ConditionStatus::HeuristicPass) {
        std::ostringstream os;
        if (c6_branch_supplied)
            os << "designated solution branch supplied; multiplicity not probed by Newton restarts";
        else
            os << c6_probes << " perturbed Newton restarts agreed at every sample";
        if (c6_unprobed > 0) os << " (" << c6_unprobed << " restart directions did not converge)";
        c6.diagnostic = os.str();
    }
    if (c7_evaluated == 0 && c7.status == ConditionStatus::Pass) {
        c7.status = ConditionStatus::Skipped;
        c7.diagnostic = "controllability matrix undefined: prerequisite conditions failed at every sample";
    } else if (c7.status == ConditionStatus::Pass) {
        c7.diagnostic = "output controllability matrix invertible at all evaluated samples";
    }
    return report;
}

// ---------------------------------------------------------------------------
// Invexity of the reduced objective
// ---------------------------------------------------------------------------

/// The constructive invexity kernel for the reduced objective f(T(u)):
/// eta(u2, u1) = D_u T(u1)^{-1} (T(u2) - T(u1)). With this choice the invexity
/// inequality reduces to the gradient inequality of the convex f in output
/// space, so it holds on every problem whose controllability matrix is
/// invertible between the two points.
inline Vector invexity_witness_eta(const RmpcProblem& p, const Vector& u1, const Vector& u2,
                                   const NewtonOptions& opts = {}) {
    const Box box = p.control_box();
    if (!box.contains(u1, 1e-12) || !box.contains(u2, 1e-12))
        throw InvalidArgumentError("invexity_witness_eta: controls must lie in the admissible box");
    Evaluator eval(p, opts);
    const Vector y2 = eval.output(u2);
    const Vector y1 = eval.output(u1);
    const DenseMatrix t = eval.controllability(u1);
    Vector dy(y1.size());
    for (std::size_t i = 0; i < y1.size(); ++i) dy[i] = y2[i] - y1[i];
    DenseFactorization lu(t);
    return lu.solve(dy);
}

struct InvexityViolation {
    Vector u1, u2;
    double lhs; // f(T(u2)) - f(T(u1))
    double rhs; // eta^T grad (f o T)(u1)
};

struct InvexityCheckResult {
    long pairs_tested = 0;
    long pair_failures = 0; // pairs whose evaluation failed (recorded, not fatal)
    std::vector<InvexityViolation> violations;
    double max_violation = 0.0; // largest rhs - lhs among violations
    double min_margin = std::numeric_limits<double>::infinity(); // smallest lhs - rhs seen
};

inline InvexityCheckResult check_invexity_inequality(const RmpcProblem& p,
                                                     const std::vector<std::pair<Vector, Vector>>& pairs,
                                                     double tol = 1e-8, const NewtonOptions& opts = {}) {
    InvexityCheckResult result;
    Evaluator eval(p, opts);
    for (const auto& [u1, u2] : pairs) {
        try {
            const double f2 = eval.objective(u2);
            const double f1 = eval.objective(u1);
            const Vector grad1 = eval.gradient(u1);
            const Vector eta = invexity_witness_eta(p, u1, u2, opts);
            const double lhs = f2 - f1;
            const double rhs = dot(eta, grad1);
            ++result.pairs_tested;
            result.min_margin = std::min(result.min_margin, lhs - rhs);
            if (lhs - rhs < -tol) {
                result.violations.push_back({u1, u2, lhs, rhs});
                result.max_violation = std::max(result.max_violation, rhs - lhs);
            }
        } catch (const Error&) {
            ++result.pair_failures;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// KKT equivalence between control space and output space
// ---------------------------------------------------------------------------

/// Stationarity of the control-space Lagrangian must equal the output-space
/// stationarity mapped back through D_u T:
///   D_u L^U  =  [grad f + lambda^T (d o T^{-1})'] D_u T.
/// The right-hand side is assembled with an explicit solve against D_u T, so
/// the identity genuinely exercises both gradient routes.
inline double kkt_equivalence_gap(const RmpcProblem& p, const Vector& u, const Vector& lambda_lower,
                                  const Vector& lambda_upper, const NewtonOptions& opts = {}) {
    Evaluator eval(p, opts);
    const int n = p.control_dim();
    const Vector grad = eval.gradient(u);
    const Vector y = eval.output(u);
    const Vector gy = p.objective_gradient(y);
    const DenseMatrix t = eval.controllability(u);

    Vector lhs(n);
    Vector nu(n); // lambda^T grad_u d for the box: upper minus lower multipliers
    for (int i = 0; i < n; ++i) {
        nu[i] = lambda_upper[i] - lambda_lower[i];
        lhs[i] = grad[i] + nu[i];
    }

    DenseFactorization lu(t);
    const Vector z = lu.solve_transpose(nu);     // z^T = nu^T T^{-1}
    const Vector zt = t.matvec_transpose(z);     // (nu^T T^{-1}) T
    const Vector gyt = t.matvec_transpose(gy);   // grad f^T T

    double gap = 0.0;
    for (int i = 0; i < n; ++i) gap = std::max(gap, std::abs(lhs[i] - (gyt[i] + zt[i])));
    return gap;
}

inline bool kkt_equivalence_check(const RmpcProblem& p, const Vector& u, const Vector& lambda_lower,
                                  const Vector& lambda_upper, double tol = 1e-6,
                                  const NewtonOptions& opts = {}) {
    return kkt_equivalence_gap(p, u, lambda_lower, lambda_upper, opts) <= tol;
}

inline bool kkt_equivalence_check(const RmpcProblem& p, const OptimizationResult& r, double tol = 1e-6) {
    return kkt_equivalence_check(p, r.u_star, r.multipliers_lower, r.multipliers_upper, tol);
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

enum class KktClass { Interior, Boundary };

/// Optimality certificate for a KKT point. An interior point is a global
/// minimum of the reduced objective over the whole box. A boundary point is
/// a global minimum over V(u*) = {u in U : T(u) - T(u*) lies in the tangent
/// cone of the attainable output set at T(u*)}; under the box LICQ that cone
/// is exactly {t : t^T n_i <= 0 for every active cone normal n_i}, and the
/// normals are signed rows of D_u T(u*)^{-1}.
struct KktCertificate {
    KktClass classification = KktClass::Interior;
    std::vector<ActiveBound> active_set;        // at the optimizer's activity tolerance
    std::vector<ActiveBound> active_set_strict; // exactly on the bound
    DenseMatrix cone_normals;                   // one row per active bound; 0 x n when interior
    Vector u_star;
    Vector y_star;
    double f_star = 0.0;
    double kkt_residual = 0.0;
    std::string guarantee;
};

inline KktCertificate classify_kkt(const RmpcProblem& p, const OptimizationResult& r,
                                   double kkt_tol = 1e-6, const NewtonOptions& opts = {}) {
    if (!(r.kkt_residual <= kkt_tol))
        throw NotAKktPointError("classify_kkt: KKT residual " + std::to_string(r.kkt_residual) +
                                " exceeds tolerance " + std::to_string(kkt_tol));
    const Box box = p.control_box();
    const int n = p.control_dim();
    Evaluator eval(p, opts);

    KktCertificate cert;
    cert.u_star = r.u_star;
    cert.y_star = eval.output(r.u_star);
    cert.f_star = p.objective(cert.y_star);
    cert.kkt_residual = r.kkt_residual;
    cert.active_set = r.active_set;
    for (int i = 0; i < n; ++i) {
        if (r.u_star[i] == box.lower[i]) cert.active_set_strict.push_back({i, BoundSide::Lower});
        if (r.u_star[i] == box.upper[i]) cert.active_set_strict.push_back({i, BoundSide::Upper});
    }

    if (cert.active_set.empty()) {
        cert.classification = KktClass::Interior;
        cert.cone_normals = DenseMatrix(0, n);
        cert.guarantee = "interior KKT point: global minimum of the reduced objective over the whole "
                         "control box";
        return cert;
    }

    cert.classification = KktClass::Boundary;
    const DenseMatrix t = eval.controllability(r.u_star);
    DenseFactorization lu(t);
    cert.cone_normals = DenseMatrix(static_cast<int>(cert.active_set.size()), n);
    for (std::size_t a = 0; a < cert.active_set.size(); ++a) {
        Vector e(n, 0.0);
        e[cert.active_set[a].index] = 1.0;
        Vector row = lu.solve_transpose(e); // row i of T^{-1}
        const double sign = cert.active_set[a].side == BoundSide::Lower ? -1.0 : 1.0;
        for (int j = 0; j < n; ++j) cert.cone_normals(static_cast<int>(a), j) = sign * row[j];
    }
    cert.guarantee = "boundary KKT point: global minimum of the reduced objective over V(u*), the set of "
                     "admissible controls whose output displacement from T(u*) has non-positive inner "
                     "product with every active cone normal";
    return cert;
}

/// Membership test for the guarantee region V(u*) of a certificate.
inline bool membership_V(const RmpcProblem& p, const KktCertificate& cert, const Vector& u,
                         double tol = 1e-9, const NewtonOptions& opts = {}) {
    Evaluator eval(p, opts);
    const Vector y = eval.output(u);
    Vector d(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] - cert.y_star[i];
    for (int a = 0; a < cert.cone_normals.rows(); ++a) {
        double s = 0.0;
        for (int j = 0; j < cert.cone_normals.cols(); ++j) s += d[j] * cert.cone_normals(a, j);
        if (s > tol) return false;
    }
    return true;
}

/// Convenience overload constructing the certificate data at u_star first.
inline bool membership_V(const RmpcProblem& p, const Vector& u_star, const Vector& u, double tol = 1e-9,
                         const NewtonOptions& opts = {}) {
    OptimizationResult r;
    r.u_star = u_star;
    const KktPoint k = kkt_residual(p, u_star);
    r.kkt_residual = k.residual;
    r.active_set = k.active_set;
    r.multipliers_lower = k.multipliers_lower;
    r.multipliers_upper = k.multipliers_upper;
    const KktCertificate cert = classify_kkt(p, r, std::max(k.residual * 2.0, 1e-6), opts);
    return membership_V(p, cert, u, tol, opts);
}

struct GlobalOptimalityCheck {
    long sampled = 0;
    long members = 0;        // samples inside V(u*)
    long violations = 0;     // members with objective below f(u*) - tol
    long sample_failures = 0;
    double worst_gap = 0.0;  // most negative f(u) - f(u*) among members (0 if none)
};

/// Samples the box and verifies that every member of V(u*) has an objective
/// no better than the certified point (up to tol). For interior certificates
/// every sample is a member, so this checks global optimality over the box.
/// Batches of Latin hypercube samples are drawn until at least target_members
/// samples passed the membership filter (or a generous sampling cap is hit).
inline GlobalOptimalityCheck check_global_on_V(const RmpcProblem& p, const KktCertificate& cert,
                                               int target_members, unsigned long seed, double tol = 1e-8,
                                               const NewtonOptions& opts = {}) {
    GlobalOptimalityCheck out;
    Evaluator eval(p, opts);
    const double f_star = cert.f_star;
    const long sample_cap = 40L * target_members;
    unsigned long batch_seed = seed;
    while (out.members < target_members && out.sampled < sample_cap) {
        for (const Vector& u : latin_hypercube(target_members, p.control_box(), batch_seed)) {
            ++out.sampled;
            try {
                if (!membership_V(p, cert, u, 1e-9, opts)) continue;
                ++out.members;
                const double f = eval.objective(u);
                if (f < f_star - tol) {
                    ++out.violations;
                    out.worst_gap = std::min(out.worst_gap, f - f_star);
                }
            } catch (const Error&) {
                ++out.sample_failures;
            }
            if (out.members >= target_members) break;
        }
        batch_seed += 0x9e3779b97f4a7c15ULL;
    }
    return out;
}

} // namespace rmpc
