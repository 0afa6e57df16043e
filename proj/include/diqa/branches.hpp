#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace diqa {

/**
 * Log of the branch every non-differentiable operation takes: ReLU and rectifier
 * signs, max-pool argmax, and |.| signs in the losses. In record mode operations
 * append their natural choices; in replay mode they reuse the recorded ones in the
 * same order. Replaying freezes the piecewise-linear pattern of the network, so
 * finite differences around the recorded point see a smooth function even when a
 * perturbation would cross a kink. Used by gradient checks.
 */
class BranchLog {
 public:
  enum class State { kRecord, kReplay };

  void start_recording();
  void start_replay();
  State state() const noexcept { return state_; }
  std::size_t entries() const noexcept { return entries_.size(); }

  /// Returns the choices to apply: `observed` in record mode, the stored entry in replay mode.
  std::vector<std::uint32_t> visit(std::vector<std::uint32_t> observed);

 private:
  State state_ = State::kRecord;
  std::vector<std::vector<std::uint32_t>> entries_;
  std::size_t cursor_ = 0;
};

/// Log active on this thread, or nullptr.
BranchLog* active_branch_log() noexcept;

/// Activates a log for the current thread for the lifetime of the guard.
class ScopedBranchLog {
 public:
  explicit ScopedBranchLog(BranchLog& log);
  ~ScopedBranchLog();
  ScopedBranchLog(const ScopedBranchLog&) = delete;
  ScopedBranchLog& operator=(const ScopedBranchLog&) = delete;

 private:
  BranchLog* previous_;
};

}  // namespace diqa
