#include "diqa/branches.hpp"

#include <string>

#include "diqa/errors.hpp"

namespace diqa {
namespace {
thread_local BranchLog* g_active = nullptr;
}

void BranchLog::start_recording() {
  state_ = State::kRecord;
  entries_.clear();
  cursor_ = 0;
}

void BranchLog::start_replay() {
  state_ = State::kReplay;
  cursor_ = 0;
}

std::vector<std::uint32_t> BranchLog::visit(std::vector<std::uint32_t> observed) {
  if (state_ == State::kRecord) {
    entries_.push_back(observed);
    return observed;
  }
  if (cursor_ >= entries_.size()) throw StateError("branch replay ran past the recorded evaluation");
  const auto& stored = entries_[cursor_++];
  if (stored.size() != observed.size()) {
    throw StateError("branch replay entry " + std::to_string(cursor_ - 1) + " has a different size");
  }
  return stored;
}

BranchLog* active_branch_log() noexcept { return g_active; }

ScopedBranchLog::ScopedBranchLog(BranchLog& log) : previous_(g_active) { g_active = &log; }
ScopedBranchLog::~ScopedBranchLog() { g_active = previous_; }

}  // namespace diqa
