// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/codebook.hpp>
#include <instsplat/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace instsplat {

namespace {

template <typename A, typename B>
double
squared_distance(const A &a, const B &b) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < a.size(); ++c) {
        const double t = a(c) - b(c);
        d += t * t;
    }
    return d;
}

std::uint64_t
mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<Eigen::Index>
uniform_rows(Eigen::Index n, std::size_t k, std::mt19937_64 &rng) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    // Partial Fisher-Yates: the first k slots end up uniformly chosen.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(k);
    return order;
}

std::vector<Eigen::Index>
plus_plus_rows(const RowMatrix &x, std::size_t k, std::mt19937_64 &rng) {
    const Eigen::Index n = x.rows();
    std::vector<Eigen::Index> chosen;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    chosen.push_back(first(rng));
    taken[chosen.back()] = 1;

    std::vector<double> nearest(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        nearest[i] = squared_distance(x.row(i), x.row(chosen[0]));

    const std::size_t trials = 2 + std::size_t(std::log(double(k)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (chosen.size() < k) {
        const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
        Eigen::Index best = -1;
        if (total <= 0.0) {
            // Every remaining row duplicates a chosen one: take the lowest free index.
            for (Eigen::Index i = 0; i < n && best < 0; ++i) {
                if (!taken[i])
                    best = i;
            }
        } else {
            double best_potential = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < trials; ++t) {
                double target       = unit(rng) * total;
                Eigen::Index cand   = n - 1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    target -= nearest[i];
                    if (target < 0.0 && nearest[i] > 0.0) {
                        cand = i;
                        break;
                    }
                }
                if (nearest[cand] <= 0.0)
                    continue;
                double potential = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    potential += std::min(nearest[i], squared_distance(x.row(i), x.row(cand)));
                if (potential < best_potential) {
                    best_potential = potential;
                    best           = cand;
                }
            }
            if (best < 0) {
                for (Eigen::Index i = 0; i < n && best < 0; ++i) {
                    if (nearest[i] > 0.0)
                        best = i;
                }
            }
        }
        chosen.push_back(best);
        taken[best] = 1;
        for (Eigen::Index i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(x.row(i), x.row(best)));
    }
    return chosen;
}

double
total_distortion(const RowMatrix &x, const RowMatrix &entries,
                 const std::vector<std::uint32_t> &assignments) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        d += squared_distance(x.row(i), entries.row(assignments[i]));
    return d;
}

Codebook
fine_codebook(const RowMatrix &sub, std::size_t k, std::uint64_t seed, const TwoLevelOptions &o) {
    Codebook cb = init_codebook(sub, k, seed, o.seeding).codebook;
    run_kmeans(sub, cb, o.max_rounds);
    return cb;
}

} // namespace

CodebookInit
init_codebook(const RowMatrix &features, std::size_t k, std::uint64_t seed, Seeding seeding) {
    require(features.rows() > 0, ErrorCode::Validation, "cannot build a codebook from no rows");
    require(k > 0, ErrorCode::Validation, "codebook size must be positive");

    CodebookInit out;
    if (std::size_t(features.rows()) < k) {
        out.degraded = true;
        k            = std::size_t(features.rows());
    }
    std::mt19937_64 rng(seed);
    const auto rows = seeding == Seeding::Uniform ? uniform_rows(features.rows(), k, rng)
                                                  : plus_plus_rows(features, k, rng);
    out.codebook.entries.resize(Eigen::Index(k), features.cols());
    for (std::size_t j = 0; j < k; ++j)
        out.codebook.entries.row(Eigen::Index(j)) = features.row(rows[j]);
    out.codebook.assignments = assign(features, out.codebook.entries);
    return out;
}

std::vector<std::uint32_t>
assign(const RowMatrix &features, const RowMatrix &entries) {
    require(entries.rows() > 0, ErrorCode::Validation, "codebook has no entries");
    require(entries.cols() == features.cols(), ErrorCode::Validation,
            "codebook and features differ in dimension");
    std::vector<std::uint32_t> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        double best_d      = std::numeric_limits<double>::infinity();
        std::uint32_t best = 0;
        for (Eigen::Index j = 0; j < entries.rows(); ++j) {
            const double d = squared_distance(features.row(i), entries.row(j));
            if (d < best_d) {
                best_d = d;
                best   = std::uint32_t(j);
            }
        }
        out[i] = best;
    }
    return out;
}

Codebook
update_codebook(const RowMatrix &features, const Codebook &current) {
    const Eigen::Index n = features.rows();
    const Eigen::Index k = current.entries.rows();
    require(std::size_t(n) == current.assignments.size(), ErrorCode::Validation,
            "assignments do not match the feature rows");
    require(current.entries.cols() == features.cols(), ErrorCode::Validation,
            "codebook and features differ in dimension");
    for (std::uint32_t a : current.assignments)
        require(a < std::uint32_t(k), ErrorCode::Validation, "assignment out of range");

    RowMatrix means = RowMatrix::Zero(k, features.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        means.row(current.assignments[i]) += features.row(i);
        ++counts[current.assignments[i]];
    }

    // Keep the old entry wherever the mean does not strictly lower that
    // cluster's distortion; converged clusters stay bit-identical.
    std::vector<double> sse_old(static_cast<std::size_t>(k), 0.0), sse_new(sse_old);
    for (Eigen::Index j = 0; j < k; ++j) {
        if (counts[j] > 0)
            means.row(j) /= double(counts[j]);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto j = current.assignments[i];
        sse_old[j] += squared_distance(features.row(i), current.entries.row(j));
        sse_new[j] += squared_distance(features.row(i), means.row(j));
    }
    Codebook next = current;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (counts[j] > 0 && sse_new[j] < sse_old[j])
            next.entries.row(j) = means.row(j);
    }
    if (total_distortion(features, next.entries, next.assignments) >
        total_distortion(features, current.entries, current.assignments))
        next.entries = current.entries;

    // Re-seed empty entries on the worst-fitting rows.
    std::vector<Eigen::Index> empty;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (counts[j] == 0)
            empty.push_back(j);
    }
    if (!empty.empty()) {
        std::vector<double> cost(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            cost[i] = squared_distance(features.row(i), next.entries.row(next.assignments[i]));
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index(0));
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return cost[a] > cost[b]; });
        std::size_t cursor = 0;
        for (Eigen::Index e : empty) {
            while (cursor < order.size() &&
                   (cost[order[cursor]] <= 0.0 || counts[next.assignments[order[cursor]]] <= 1))
                ++cursor;
            if (cursor == order.size())
                break;
            const Eigen::Index row = order[cursor++];
            --counts[next.assignments[row]];
            ++counts[e];
            next.entries.row(e)   = features.row(row);
            next.assignments[row] = std::uint32_t(e);
        }
    }
    return next;
}

double
distortion(const RowMatrix &features, const Codebook &codebook) {
    require(std::size_t(features.rows()) == codebook.assignments.size(), ErrorCode::Validation,
            "assignments do not match the feature rows");
    return total_distortion(features, codebook.entries, codebook.assignments);
}

RowMatrix
quantize_forward(const Codebook &codebook) {
    RowMatrix out(Eigen::Index(codebook.assignments.size()), codebook.entries.cols());
    for (std::size_t i = 0; i < codebook.assignments.size(); ++i)
        out.row(Eigen::Index(i)) = codebook.entries.row(codebook.assignments[i]);
    return out;
}

RowMatrix
straight_through_backward(const RowMatrix &grad_quantized) {
    return grad_quantized;
}

KMeansTrace
run_kmeans(const RowMatrix &features, Codebook &codebook, std::size_t max_rounds) {
    KMeansTrace trace;
    trace.distortion.push_back(distortion(features, codebook));
    for (std::size_t round = 0; round < max_rounds; ++round) {
        codebook = update_codebook(features, codebook);
        trace.distortion.push_back(distortion(features, codebook));
        auto next = assign(features, codebook.entries);
        ++trace.rounds;
        const bool unchanged = next == codebook.assignments;
        codebook.assignments = std::move(next);
        trace.distortion.push_back(distortion(features, codebook));
        if (unchanged) {
            trace.converged = true;
            break;
        }
    }
    return trace;
}

Codebook
build_flat(const RowMatrix &features, std::size_t k, std::uint64_t seed, Seeding seeding,
           std::size_t max_rounds) {
    Codebook cb = init_codebook(features, k, seed, seeding).codebook;
    run_kmeans(features, cb, max_rounds);
    return cb;
}

PositionMatrix
normalize_positions(const PositionMatrix &positions, const Aabb &bounds) {
    PositionMatrix out(positions.rows(), 3);
    const Vec3 extent = bounds.extent();
    for (Eigen::Index i = 0; i < positions.rows(); ++i) {
        for (int a = 0; a < 3; ++a)
            out(i, a) = extent[a] > 0.0 ? (positions(i, a) - bounds.min[a]) / extent[a] : 0.0;
    }
    return out;
}

RowMatrix
TwoLevelCodebook::coarse_input(const FeatureMatrix &features,
                               const PositionMatrix &positions) const {
    require(features.rows() == positions.rows(), ErrorCode::Validation,
            "features and positions differ in row count");
    RowMatrix x = RowMatrix::Zero(features.rows(), kFeatureDim + 3);
    x.leftCols(kFeatureDim) = features;
    if (options.use_positions)
        x.rightCols(3) = options.position_weight * normalize_positions(positions, bounds);
    return x;
}

FeatureMatrix
TwoLevelCodebook::quantized() const {
    FeatureMatrix out(Eigen::Index(point_count()), kFeatureDim);
    for (std::size_t i = 0; i < point_count(); ++i)
        out.row(Eigen::Index(i)) = fine_entries[coarse_assignments[i]].row(fine_assignments[i]);
    return out;
}

FeatureMatrix
TwoLevelCodebook::entry_gradient(const FeatureMatrix &grad_quantized) const {
    require(std::size_t(grad_quantized.rows()) == point_count(), ErrorCode::Validation,
            "gradient rows do not match the codebook");
    std::vector<FeatureMatrix> sums;
    sums.reserve(fine_entries.size());
    for (const RowMatrix &f : fine_entries)
        sums.push_back(FeatureMatrix::Zero(f.rows(), kFeatureDim));
    for (std::size_t i = 0; i < point_count(); ++i)
        sums[coarse_assignments[i]].row(fine_assignments[i]) += grad_quantized.row(Eigen::Index(i));
    FeatureMatrix out(grad_quantized.rows(), kFeatureDim);
    for (std::size_t i = 0; i < point_count(); ++i)
        out.row(Eigen::Index(i)) = sums[coarse_assignments[i]].row(fine_assignments[i]);
    return out;
}

std::vector<InstanceId>
TwoLevelCodebook::populated() const {
    std::set<InstanceId> ids;
    for (std::size_t i = 0; i < point_count(); ++i)
        ids.insert(instance_of(i));
    return {ids.begin(), ids.end()};
}

InstanceTable
TwoLevelCodebook::instance_table() const {
    return InstanceTable::from_assignments(coarse_assignments, fine_assignments);
}

void
TwoLevelCodebook::reassign(const FeatureMatrix &features, const PositionMatrix &positions) {
    const RowMatrix x  = coarse_input(features, positions);
    coarse_assignments = assign(x, coarse_entries);
    fine_assignments.assign(coarse_assignments.size(), 0);
    for (std::size_t i = 0; i < coarse_assignments.size(); ++i) {
        RowMatrix &fine = fine_entries[coarse_assignments[i]];
        if (fine.rows() == 0)
            fine = coarse_entries.row(coarse_assignments[i]).leftCols(kFeatureDim);
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < fine.rows(); ++j) {
            const double d = squared_distance(features.row(Eigen::Index(i)), fine.row(j));
            if (d < best_d) {
                best_d              = d;
                fine_assignments[i] = std::uint32_t(j);
            }
        }
    }
}

void
TwoLevelCodebook::update(const FeatureMatrix &features, const PositionMatrix &positions) {
    const RowMatrix x = coarse_input(features, positions);
    const std::vector<std::uint32_t> before = coarse_assignments;
    Codebook coarse{coarse_entries, coarse_assignments};
    coarse             = update_codebook(x, coarse);
    coarse_entries     = std::move(coarse.entries);
    coarse_assignments = std::move(coarse.assignments);

    std::vector<std::vector<Eigen::Index>> members(fine_entries.size());
    for (std::size_t i = 0; i < coarse_assignments.size(); ++i)
        members[coarse_assignments[i]].push_back(Eigen::Index(i));

    for (std::size_t c = 0; c < fine_entries.size(); ++c) {
        if (members[c].empty())
            continue;
        RowMatrix sub(Eigen::Index(members[c].size()), kFeatureDim);
        for (std::size_t m = 0; m < members[c].size(); ++m)
            sub.row(Eigen::Index(m)) = features.row(members[c][m]);
        if (fine_entries[c].rows() == 0)
            fine_entries[c] = sub.colwise().mean();

        Codebook fine{fine_entries[c], {}};
        fine.assignments.resize(members[c].size());
        const auto nearest = assign(sub, fine_entries[c]);
        for (std::size_t m = 0; m < members[c].size(); ++m) {
            const Eigen::Index i = members[c][m];
            // Points that changed coarse cluster get the nearest fine entry.
            fine.assignments[m] = before[i] == c ? fine_assignments[i] : nearest[m];
        }
        fine = update_codebook(sub, fine);
        fine_entries[c] = std::move(fine.entries);
        for (std::size_t m = 0; m < members[c].size(); ++m)
            fine_assignments[members[c][m]] = fine.assignments[m];
    }
}

double
TwoLevelCodebook::fine_distortion(const FeatureMatrix &features) const {
    return (features - quantized()).squaredNorm();
}

TwoLevelCodebook
build_two_level(const FeatureMatrix &features, const PositionMatrix &positions,
                const TwoLevelOptions &options) {
    require(features.rows() > 0, ErrorCode::Validation, "cannot cluster an empty scene");
    require(features.rows() == positions.rows(), ErrorCode::Validation,
            "features and positions differ in row count");
    require(options.coarse_size > 0 && options.fine_size > 0, ErrorCode::Validation,
            "codebook sizes must be positive");

    TwoLevelCodebook out;
    out.options = options;
    for (Eigen::Index i = 0; i < positions.rows(); ++i)
        out.bounds.extend(positions.row(i).transpose());

    const RowMatrix x = out.coarse_input(features, positions);
    Codebook coarse   = init_codebook(x, options.coarse_size, options.seed, options.seeding).codebook;
    run_kmeans(x, coarse, options.max_rounds);
    out.coarse_entries     = coarse.entries;
    out.coarse_assignments = coarse.assignments;

    const std::size_t k1 = coarse.size();
    std::vector<std::vector<Eigen::Index>> members(k1);
    for (std::size_t i = 0; i < out.coarse_assignments.size(); ++i)
        members[out.coarse_assignments[i]].push_back(Eigen::Index(i));

    out.fine_entries.assign(k1, RowMatrix(0, kFeatureDim));
    out.fine_assignments.assign(out.coarse_assignments.size(), 0);
    for (std::size_t c = 0; c < k1; ++c) {
        if (members[c].empty())
            continue;
        RowMatrix sub(Eigen::Index(members[c].size()), kFeatureDim);
        for (std::size_t m = 0; m < members[c].size(); ++m)
            sub.row(Eigen::Index(m)) = features.row(members[c][m]);
        const std::size_t k2 = std::min(options.fine_size, members[c].size());
        Codebook fine        = fine_codebook(sub, k2, mix_seed(options.seed, c), options);
        out.fine_entries[c]  = fine.entries;
        for (std::size_t m = 0; m < members[c].size(); ++m)
            out.fine_assignments[members[c][m]] = fine.assignments[m];
    }
    return out;
}

} // namespace instsplat
