#pragma once

#include <stdexcept>
#include <string>

namespace kltwin {

// Exit codes used by the CLI; library exceptions map onto these.
enum class ExitCode : int {
    ok = 0,
    usage = 2,
    numeric = 3,
    format = 4,
};

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Linear-algebra failure: singular normal matrix, rank deficiency, eigensolve failure.
struct DecompositionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimizer divergence (NaN/Inf loss).
struct TrainingFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or mismatched serialized artifact; carries the byte offset of the problem.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset(offset) {}
    std::size_t offset = 0;
};

} // namespace kltwin
