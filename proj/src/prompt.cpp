#include "aop/prompt.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "aop/errors.hpp"

namespace aop {

std::string_view to_string(PromptStatus s) {
    switch (s) {
        case PromptStatus::pending: return "pending";
        case PromptStatus::processed: return "processed";
        case PromptStatus::eliminated: return "eliminated";
    }
    return "unknown";
}

PromptPool::PromptPool(std::vector<PointPrompt> prompts) : prompts_(std::move(prompts)) {
    std::unordered_set<int> ids;
    for (const auto& p : prompts_) {
        if (!ids.insert(p.id).second) throw ConfigError("duplicate prompt id " + std::to_string(p.id));
        switch (p.status) {
            case PromptStatus::pending: ++pending_; break;
            case PromptStatus::processed: ++processed_; break;
            case PromptStatus::eliminated: ++eliminated_; break;
        }
    }
    std::stable_sort(prompts_.begin(), prompts_.end(),
                     [](const PointPrompt& a, const PointPrompt& b) { return a.score > b.score; });
}

std::vector<std::size_t> PromptPool::next_pending(std::size_t n) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < prompts_.size() && out.size() < n; ++i) {
        if (prompts_[i].status == PromptStatus::pending) out.push_back(i);
    }
    return out;
}

void PromptPool::mark_processed(std::size_t index) { transition(index, PromptStatus::processed); }
void PromptPool::mark_eliminated(std::size_t index) { transition(index, PromptStatus::eliminated); }

void PromptPool::transition(std::size_t index, PromptStatus to) {
    PointPrompt& p = prompts_.at(index);
    if (p.status != PromptStatus::pending) {
        throw std::logic_error("prompt " + std::to_string(p.id) + " is " + std::string(to_string(p.status)) +
                               ", cannot become " + std::string(to_string(to)));
    }
    p.status = to;
    --pending_;
    (to == PromptStatus::processed ? processed_ : eliminated_)++;
}

} // namespace aop
