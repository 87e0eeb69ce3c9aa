// SPDX-License-Identifier: Apache-2.0

#include "nmqs/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace nmqs {

namespace {

constexpr long kChunk = 256;  // fixed reduction granularity, not tied to workers

struct Accumulator {
    std::vector<Matrix> sum;
    std::vector<Eigen::MatrixXd> sumsq;  // entrywise |x|^2 of Hermitized samples
    long n = 0;
    long n_invalid = 0;

    explicit Accumulator(int n_times, int d)
        : sum(n_times, Matrix::Zero(d, d)), sumsq(n_times, Eigen::MatrixXd::Zero(d, d)) {}

    void add(const SampleTrajectory& s) {
        if (!s.valid) {
            ++n_invalid;
            return;
        }
        for (std::size_t k = 0; k < sum.size(); ++k) {
            const Matrix h = 0.5 * (s.states[k] + s.states[k].adjoint());
            sum[k] += h;
            sumsq[k] += h.cwiseAbs2();
        }
        ++n;
    }

    void merge(const Accumulator& o) {
        for (std::size_t k = 0; k < sum.size(); ++k) {
            sum[k] += o.sum[k];
            sumsq[k] += o.sumsq[k];
        }
        n += o.n;
        n_invalid += o.n_invalid;
    }
};

}  // namespace

EnsembleResult ensemble_average(const SampleGenerator& gen, long n_traj, const TimeGrid& grid,
                                int n_workers) {
    if (n_traj < 2) throw std::invalid_argument("ensemble_average: n_traj must be >= 2");
    const int n_times = grid.size();

    const long n_chunks = (n_traj + kChunk - 1) / kChunk;
    std::vector<std::unique_ptr<Accumulator>> parts(n_chunks);

    int dim = 0;
    {
        // probe one sample for the dimension
        SampleTrajectory probe = gen(0);
        dim = static_cast<int>(probe.states.front().rows());
        parts[0] = std::make_unique<Accumulator>(n_times, dim);
        parts[0]->add(probe);
        for (long i = 1; i < std::min<long>(kChunk, n_traj); ++i) parts[0]->add(gen(i));
    }

    auto run_chunk = [&](long c) {
        auto acc = std::make_unique<Accumulator>(n_times, dim);
        const long lo = c * kChunk;
        const long hi = std::min(n_traj, lo + kChunk);
        for (long i = lo; i < hi; ++i) acc->add(gen(i));
        parts[c] = std::move(acc);
    };

    if (n_workers <= 1 || n_chunks <= 1) {
        for (long c = 1; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<long> next{1};
        std::vector<std::thread> pool;
        const int nw = std::min<long>(n_workers, n_chunks - 1);
        for (int w = 0; w < nw; ++w)
            pool.emplace_back([&] {
                for (long c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                    run_chunk(c);
            });
        for (auto& th : pool) th.join();
    }

    // chunk order is fixed, so the reduction is worker-count independent
    Accumulator total(n_times, dim);
    for (long c = 0; c < n_chunks; ++c) total.merge(*parts[c]);

    if (total.n_invalid * 100 > n_traj)
        throw NumericalError("ensemble_average: more than 1% of trajectories flagged invalid (" +
                             std::to_string(total.n_invalid) + "/" + std::to_string(n_traj) + ")");
    const long n = total.n;

    EnsembleResult out;
    out.grid = grid;
    out.n_traj = n;
    out.n_invalid = total.n_invalid;
    out.rho.reserve(n_times);
    out.stderr_.reserve(n_times);
    for (int k = 0; k < n_times; ++k) {
        const Matrix mean = total.sum[k] / double(n);
        out.rho.push_back(mean);
        Eigen::MatrixXd var =
            (total.sumsq[k] / double(n) - mean.cwiseAbs2()) * (double(n) / double(n - 1));
        var = var.cwiseMax(0.0);
        const Eigen::MatrixXd sem = (var / double(n)).cwiseSqrt();
        out.stderr_.push_back(trace_norm(sem.cast<Complex>()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HOPS
// ---------------------------------------------------------------------------

namespace {

TimeGrid half_grid(const TimeGrid& grid) {
    return TimeGrid(grid.t0, 0.5 * grid.dt, 2 * grid.n_steps);
}

int half_index(const TimeGrid& grid, double t) {
    const double hs = 0.5 * grid.dt;
    int k = static_cast<int>(std::lround((t - grid.t0) / hs));
    return std::clamp(k, 0, 2 * grid.n_steps);
}

}  // namespace

ColoredNoiseGenerator hops_noise_generator(const HopsProblem& prob, const TimeGrid& grid) {
    CorrelationSum sum;
    sum.terms.push_back(prob.kernel);
    return ColoredNoiseGenerator(sum, half_grid(grid));
}

namespace {

HopsTrajectory hops_run(const HopsProblem& prob, const TimeGrid& grid,
                        const ColoredNoiseGenerator& noise, std::uint64_t seed,
                        std::uint64_t trajectory_index, bool nonlinear) {
    const Matrix& h = prob.system.h;
    const Matrix& l = prob.system.couplings.at(0);
    const Matrix ldag = l.adjoint();
    const int d = prob.system.dim();
    const int k_max = prob.k_max;
    if (k_max < 1) throw std::invalid_argument("hops: k_max must be >= 1");
    const Complex g = prob.kernel.c;
    const Complex omega = prob.kernel.mu;
    if (omega.real() <= 0.0) throw std::invalid_argument("hops: Re Omega must be > 0");

    const std::vector<Complex> z = noise.sample(seed, trajectory_index);

    // state layout: k_max+1 levels of dimension d, plus one slot for the
    // nonlinear noise-shift memory
    const int n_levels = k_max + 1;
    Vector y = Vector::Zero(n_levels * d + 1);
    y.segment(0, d) = prob.psi0;

    auto rhs = [&](double t, const Vector& yy) {
        const int zi = half_index(grid, t);
        Vector dy = Vector::Zero(yy.size());
        const Complex shift = yy(n_levels * d);

        Complex l_expect = 0.0;
        if (nonlinear) {
            const Vector psi = yy.segment(0, d);
            const double nrm2 = psi.squaredNorm();
            if (nrm2 > 0.0) l_expect = (psi.adjoint() * ldag * psi)(0) / nrm2;
        }
        const Complex zt = std::conj(z[zi]) + (nonlinear ? shift : Complex(0.0));

        for (int k = 0; k < n_levels; ++k) {
            auto psi_k = yy.segment(k * d, d);
            Vector dpsi = -I * (h * psi_k) - double(k) * omega * psi_k + zt * (l * psi_k);
            if (k > 0) dpsi += double(k) * g * (l * yy.segment((k - 1) * d, d));
            Vector upper;
            if (k < k_max) {
                upper = yy.segment((k + 1) * d, d);
            } else {
                // terminator psi^{k_max+1} = (alpha(0)/Omega) L psi^{k_max}
                upper = (g / omega) * (l * psi_k);
            }
            if (nonlinear)
                dpsi -= ldag * upper - l_expect * upper;
            else
                dpsi -= ldag * upper;
            dy.segment(k * d, d) = dpsi;
        }
        if (nonlinear) dy(n_levels * d) = std::conj(g) * l_expect - std::conj(omega) * shift;
        return dy;
    };

    HopsTrajectory out;
    out.psi0.reserve(grid.size());
    Vector psi_out = y.segment(0, d);
    if (nonlinear) psi_out.normalize();
    out.psi0.push_back(psi_out);

    for (int step = 0; step < grid.n_steps; ++step) {
        y = rk4_step(rhs, grid.point(step), y, grid.dt);
        const double nrm = y.segment(0, d).norm();
        if (!std::isfinite(nrm) || y.segment(0, d).squaredNorm() > 1e12) {
            out.valid = false;
            out.psi0.resize(grid.size(), Vector::Zero(d));
            return out;
        }
        if (nonlinear && nrm > 0.0) y.segment(0, n_levels * d) /= nrm;
        psi_out = y.segment(0, d);
        if (nonlinear && psi_out.norm() > 0.0) psi_out.normalize();
        out.psi0.push_back(psi_out);
    }
    return out;
}

}  // namespace

HopsTrajectory hops_linear_trajectory(const HopsProblem& prob, const TimeGrid& grid,
                                      const ColoredNoiseGenerator& noise, std::uint64_t seed,
                                      std::uint64_t trajectory_index) {
    return hops_run(prob, grid, noise, seed, trajectory_index, false);
}

HopsTrajectory hops_nonlinear_trajectory(const HopsProblem& prob, const TimeGrid& grid,
                                         const ColoredNoiseGenerator& noise, std::uint64_t seed,
                                         std::uint64_t trajectory_index) {
    return hops_run(prob, grid, noise, seed, trajectory_index, true);
}

EnsembleResult hops_ensemble(const HopsProblem& prob, const TimeGrid& grid, long n_traj,
                             std::uint64_t seed, bool nonlinear, int n_workers) {
    const ColoredNoiseGenerator noise = hops_noise_generator(prob, grid);
    auto gen = [&](std::uint64_t idx) {
        HopsTrajectory tr = hops_run(prob, grid, noise, seed, idx, nonlinear);
        SampleTrajectory s;
        s.valid = tr.valid;
        s.states.reserve(tr.psi0.size());
        for (const auto& psi : tr.psi0) s.states.push_back(psi * psi.adjoint());
        return s;
    };
    return ensemble_average(gen, n_traj, grid, n_workers);
}

// ---------------------------------------------------------------------------
// SLN
// ---------------------------------------------------------------------------

SlnNoiseGenerator sln_noise_generator(const SlnProblem& prob, const TimeGrid& grid) {
    return SlnNoiseGenerator(prob.alpha_r, prob.alpha_i, half_grid(grid));
}

SampleTrajectory sln_trajectory(const SlnProblem& prob, const TimeGrid& grid,
                                const SlnNoiseGenerator& noise, std::uint64_t seed,
                                std::uint64_t trajectory_index) {
    const Matrix& h = prob.system.h;
    const Matrix& q = prob.system.couplings.at(0);
    if (hermiticity_defect(q) > 1e-10)
        throw std::invalid_argument("sln_trajectory: coupling operator must be Hermitian");
    const int d = prob.system.dim();

    const SlnNoise zn = noise.sample(seed, trajectory_index);

    auto rhs = [&](double t, const Vector& y) {
        const int k = half_index(grid, t);
        const Matrix p = unvec(y, d);
        Matrix dp = -I * (h * p - p * h);
        dp += I * zn.xi[k] * (q * p - p * q);
        dp += 0.5 * I * zn.nu[k] * (q * p + p * q);
        return vec(dp);
    };

    SampleTrajectory out;
    out.states.reserve(grid.size());
    Vector y = vec(prob.rho0);
    out.states.push_back(prob.rho0);
    for (int step = 0; step < grid.n_steps; ++step) {
        y = rk4_step(rhs, grid.point(step), y, grid.dt);
        if (!y.allFinite() || y.cwiseAbs().maxCoeff() > 1e9) {
            out.valid = false;
            out.states.resize(grid.size(), Matrix::Zero(d, d));
            return out;
        }
        out.states.push_back(unvec(y, d));
    }
    return out;
}

EnsembleResult sln_ensemble(const SlnProblem& prob, const TimeGrid& grid, long n_traj,
                            std::uint64_t seed, int n_workers) {
    const SlnNoiseGenerator noise = sln_noise_generator(prob, grid);
    auto gen = [&](std::uint64_t idx) { return sln_trajectory(prob, grid, noise, seed, idx); };
    return ensemble_average(gen, n_traj, grid, n_workers);
}

// ---------------------------------------------------------------------------
// Non-Markovian quantum jumps
// ---------------------------------------------------------------------------

namespace {

struct ClassTable {
    std::vector<Vector> states;
    std::vector<long> counts;

    // phase-aligned distance merge
    int find(const Vector& psi, double tol = 1e-8) const {
        for (std::size_t i = 0; i < states.size(); ++i) {
            const Complex ov = (states[i].adjoint() * psi)(0);
            const Complex phase = std::abs(ov) > 0.0 ? ov / std::abs(ov) : Complex(1.0);
            if ((states[i] * phase - psi).norm() < tol) return static_cast<int>(i);
        }
        return -1;
    }

    int find_or_add(const Vector& psi) {
        const int idx = find(psi);
        if (idx >= 0) return idx;
        states.push_back(psi);
        counts.push_back(0);
        return static_cast<int>(states.size()) - 1;
    }
};

}  // namespace

NmqjResult nmqj_evolve(const TimeLocalSpec& spec, const Vector& psi0, const TimeGrid& grid,
                       long n_members, std::uint64_t seed) {
    if (n_members < 2) throw std::invalid_argument("nmqj_evolve: need at least 2 members");
    const int d = static_cast<int>(psi0.rows());
    const std::size_t n_channels = spec.channel_ops.size();

    ClassTable table;
    table.states.push_back(psi0.normalized());
    table.counts.push_back(n_members);

    std::vector<int> member_class(n_members, 0);
    std::vector<CounterRng> member_rng;
    member_rng.reserve(n_members);
    for (long m = 0; m < n_members; ++m) member_rng.emplace_back(seed, 0x4a756d70ULL + m);

    NmqjResult res;
    res.first_jump_times.assign(n_members, -1.0);

    auto record = [&](int, double) {
        // ensemble state rho = sum (N_a/N) |psi_a><psi_a| and its member-level
        // standard error of the mean
        Matrix mean = Matrix::Zero(d, d);
        for (std::size_t a = 0; a < table.states.size(); ++a)
            if (table.counts[a] > 0)
                mean += (double(table.counts[a]) / double(n_members)) *
                        (table.states[a] * table.states[a].adjoint());
        Eigen::MatrixXd var = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t a = 0; a < table.states.size(); ++a) {
            if (table.counts[a] == 0) continue;
            const Matrix proj = table.states[a] * table.states[a].adjoint();
            var += (double(table.counts[a]) / double(n_members)) * (proj - mean).cwiseAbs2();
        }
        var *= double(n_members) / double(n_members - 1);
        const Eigen::MatrixXd sem = (var / double(n_members)).cwiseSqrt();
        res.ensemble.rho.push_back(mean);
        res.ensemble.stderr_.push_back(trace_norm(sem.cast<Complex>()));

        JumpEnsemble snap;
        for (std::size_t a = 0; a < table.states.size(); ++a) {
            if (table.counts[a] == 0) continue;
            snap.states.push_back(table.states[a]);
            snap.counts.push_back(table.counts[a]);
        }
        snap.total = n_members;
        res.history.push_back(std::move(snap));
    };

    record(0, grid.t0);

    for (int step = 0; step < grid.n_steps; ++step) {
        const double t = grid.point(step);
        const double dt = grid.dt;

        // channel data at the step start
        std::vector<Matrix> cs(n_channels);
        std::vector<double> deltas(n_channels);
        for (std::size_t c = 0; c < n_channels; ++c) {
            cs[c] = spec.channel_ops[c](t);
            deltas[c] = spec.channel_rates[c](t);
        }

        const std::size_t n_classes = table.states.size();

        // candidate jumps per class: (probability, target class)
        std::vector<std::vector<std::pair<double, int>>> jumps(n_classes);
        std::vector<Vector> new_states;  // forward targets not in the table yet

        for (std::size_t c = 0; c < n_channels; ++c) {
            // the paper's canonical convention (2 C rho C^+ - {C^+C, rho})
            // corresponds to an effective jump rate 2 Delta_k
            const double rate = 2.0 * deltas[c];
            if (rate > 0.0) {
                for (std::size_t a = 0; a < n_classes; ++a) {
                    if (table.counts[a] == 0) continue;
                    const Vector phi = cs[c] * table.states[a];
                    const double w = phi.squaredNorm();
                    if (w < 1e-28) continue;
                    const Vector target = phi / std::sqrt(w);
                    int tgt = table.find(target);
                    if (tgt < 0) {
                        // defer adding until after the loop so indices stay stable
                        bool found = false;
                        for (std::size_t q = 0; q < new_states.size(); ++q) {
                            const Complex ov = (new_states[q].adjoint() * target)(0);
                            const Complex ph =
                                std::abs(ov) > 0 ? ov / std::abs(ov) : Complex(1.0);
                            if ((new_states[q] * ph - target).norm() < 1e-8) {
                                tgt = static_cast<int>(n_classes + q);
                                found = true;
                                break;
                            }
                        }
                        if (!found) {
                            new_states.push_back(target);
                            tgt = static_cast<int>(n_classes + new_states.size() - 1);
                        }
                    }
                    jumps[a].push_back({rate * dt * w, tgt});
                }
            } else if (rate < 0.0) {
                // backward: a member in the jump-target state alpha returns to
                // the source alpha' it could have come from
                for (std::size_t src = 0; src < n_classes; ++src) {
                    if (table.counts[src] == 0) continue;
                    const Vector phi = cs[c] * table.states[src];
                    const double w = phi.squaredNorm();
                    if (w < 1e-28) continue;
                    const int tgt_of_forward = table.find(phi / std::sqrt(w));
                    const double flow = -rate * dt * w * double(table.counts[src]);
                    if (tgt_of_forward < 0 || table.counts[tgt_of_forward] == 0) {
                        if (flow > 1e-12 * double(n_members)) throw PositivityViolation(t);
                        continue;
                    }
                    const double p = -rate * dt * w * double(table.counts[src]) /
                                     double(table.counts[tgt_of_forward]);
                    jumps[tgt_of_forward].push_back({p, -static_cast<int>(src) - 1});
                }
            }
        }

        for (auto& s : new_states) table.states.push_back(s), table.counts.push_back(0);

        // synchronous draws against the step-start counts
        std::vector<long> delta_counts(table.states.size(), 0);
        for (long m = 0; m < n_members; ++m) {
            const int a = member_class[m];
            const auto& cand = jumps[a];
            if (cand.empty()) continue;
            const double u = member_rng[m].uniform();
            double acc = 0.0;
            for (const auto& [p, code] : cand) {
                acc += p;
                if (u < acc) {
                    const int target = code >= 0 ? code : -(code + 1);
                    delta_counts[a] -= 1;
                    delta_counts[target] += 1;
                    member_class[m] = target;
                    if (res.first_jump_times[m] < 0.0) res.first_jump_times[m] = t;
                    if (code >= 0)
                        ++res.forward_jumps;
                    else
                        ++res.backward_jumps;
                    break;
                }
            }
        }
        long check = 0;
        for (std::size_t a = 0; a < table.states.size(); ++a) {
            table.counts[a] += delta_counts[a];
            check += table.counts[a];
        }
        if (check != n_members)
            throw std::logic_error("nmqj: member count not conserved");

        // deterministic drift of every populated class under
        // H_eff(t) = H(t) - i sum_k Delta_k C^+C (from the 2 Delta jump rate)
        auto heff_rhs = [&](double tt, const Vector& y) {
            Matrix heff = spec.h_at(tt);
            Vector dy = -I * (heff * y);
            for (std::size_t c = 0; c < n_channels; ++c) {
                const Matrix ct = spec.channel_ops[c](tt);
                dy += -spec.channel_rates[c](tt) * (ct.adjoint() * (ct * y));
            }
            return dy;
        };
        for (std::size_t a = 0; a < table.states.size(); ++a) {
            if (table.counts[a] == 0) continue;
            Vector psi = rk4_step(heff_rhs, t, table.states[a], dt);
            const double nrm = psi.norm();
            if (!(nrm > 0.0) || !std::isfinite(nrm))
                throw NumericalError("nmqj: deterministic drift lost the state at t = " +
                                     std::to_string(t));
            table.states[a] = psi / nrm;
        }

        // merge classes that collided after the drift
        for (std::size_t a = 0; a < table.states.size(); ++a) {
            if (table.counts[a] == 0) continue;
            for (std::size_t b = 0; b < a; ++b) {
                if (table.counts[b] == 0) continue;
                const Complex ov = (table.states[b].adjoint() * table.states[a])(0);
                const Complex ph = std::abs(ov) > 0 ? ov / std::abs(ov) : Complex(1.0);
                if ((table.states[b] * ph - table.states[a]).norm() < 1e-8) {
                    table.counts[b] += table.counts[a];
                    table.counts[a] = 0;
                    for (long m = 0; m < n_members; ++m)
                        if (member_class[m] == static_cast<int>(a))
                            member_class[m] = static_cast<int>(b);
                    break;
                }
            }
        }

        record(step + 1, grid.point(step + 1));
    }

    res.ensemble.grid = grid;
    res.ensemble.n_traj = n_members;
    return res;
}

}  // namespace nmqs
