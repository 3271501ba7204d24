#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"
#include "icdn/rng.hpp"

#include <algorithm>
#include <map>

namespace icdn::evaluation {

FoldPlan make_folds(std::span<const int> weeks, int n_folds) {
    if (n_folds < 1) throw DomainError("n_folds must be >= 1");
    if (!std::is_sorted(weeks.begin(), weeks.end()) || std::adjacent_find(weeks.begin(), weeks.end()) != weeks.end())
        throw DomainError("weeks must be sorted and distinct");
    const auto blocks = static_cast<std::size_t>(n_folds) + 1;
    if (weeks.size() < blocks)
        throw InsufficientDataError(std::to_string(weeks.size()) + " weeks cannot form " + std::to_string(n_folds) +
                                    " folds");
    const std::size_t base = weeks.size() / blocks, extra = weeks.size() % blocks;
    std::vector<std::pair<std::size_t, std::size_t>> bounds;  // [start, end)
    std::size_t start = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        bounds.emplace_back(start, start + len);
        start += len;
    }
    FoldPlan plan;
    for (std::size_t f = 1; f < blocks; ++f) {
        Fold fold;
        fold.train = {weeks[0], weeks[bounds[f - 1].second - 1]};
        fold.val = {weeks[bounds[f].first], weeks[bounds[f].second - 1]};
        plan.folds.push_back(fold);
    }
    return plan;
}

std::vector<std::vector<int>> block_bootstrap(std::span<const int> weeks, int block_len, int n_reps, std::uint64_t seed) {
    if (block_len < 1) throw DomainError("block_len must be >= 1");
    if (n_reps < 0) throw DomainError("n_reps must be nonnegative");
    std::vector<int> sorted(weeks.begin(), weeks.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::vector<int>> blocks;
    for (std::size_t s = 0; s < sorted.size(); s += static_cast<std::size_t>(block_len))
        blocks.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(s),
                            sorted.begin() + static_cast<std::ptrdiff_t>(std::min(sorted.size(), s + static_cast<std::size_t>(block_len))));
    Rng rng = make_stream(seed, "bootstrap");
    std::vector<std::vector<int>> reps;
    for (int r = 0; r < n_reps; ++r) {
        std::vector<int> rep;
        for (std::size_t d = 0; d < blocks.size(); ++d) {
            const auto& b = blocks[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(blocks.size()))];
            rep.insert(rep.end(), b.begin(), b.end());
        }
        reps.push_back(std::move(rep));
    }
    return reps;
}

std::vector<panel::WideInstance> resample_instances(std::span<const panel::WideInstance> instances,
                                                    std::span<const int> weeks) {
    std::map<int, std::vector<const panel::WideInstance*>> by_week;
    for (const auto& inst : instances) by_week[inst.week_id].push_back(&inst);
    std::vector<panel::WideInstance> out;
    for (int w : weeks) {
        auto it = by_week.find(w);
        if (it == by_week.end()) continue;
        for (const auto* inst : it->second) out.push_back(*inst);
    }
    return out;
}

}  // namespace icdn::evaluation
