#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace aop {

struct ImageSize {
    std::size_t h = 0;
    std::size_t w = 0;

    bool operator==(const ImageSize&) const = default;
};

enum class PromptStatus : std::uint8_t { pending, processed, eliminated };

std::string_view to_string(PromptStatus s);

/// Foreground point prompt in original-image pixel coordinates.
struct PointPrompt {
    int id = 0;
    int x = 0;
    int y = 0;
    float score = 0.0f;
    PromptStatus status = PromptStatus::pending;
};

/// Candidate prompts ordered by score (descending). Status changes are only
/// pending -> processed and pending -> eliminated.
class PromptPool {
  public:
    PromptPool() = default;
    /// Takes ownership of the prompts and sorts them by score descending
    /// (stable, so equal scores keep their input order). Ids must be unique.
    explicit PromptPool(std::vector<PointPrompt> prompts);

    const std::vector<PointPrompt>& prompts() const { return prompts_; }
    std::size_t size() const { return prompts_.size(); }
    bool empty() const { return prompts_.empty(); }

    std::size_t pending_count() const { return pending_; }
    std::size_t processed_count() const { return processed_; }
    std::size_t eliminated_count() const { return eliminated_; }

    /// Indices of the next `n` pending prompts in score order.
    std::vector<std::size_t> next_pending(std::size_t n) const;

    const PointPrompt& at(std::size_t index) const { return prompts_.at(index); }
    void mark_processed(std::size_t index);
    void mark_eliminated(std::size_t index);

  private:
    void transition(std::size_t index, PromptStatus to);

    std::vector<PointPrompt> prompts_;
    std::size_t pending_ = 0;
    std::size_t processed_ = 0;
    std::size_t eliminated_ = 0;
};

} // namespace aop
