#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mrdn/image.hpp"
#include "mrdn/model.hpp"

namespace mrdn {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckpoint = 3;

/// Applies the 2x stage log2(scale) times. Each stage's output is clamped and
/// quantized to 8 bits before it becomes the next stage's input, so chaining
/// saved 2x results reproduces a single 4x or 8x run exactly.
ImageRGB super_resolve(const Generator<float>& gen, const ImageRGB& lr, int scale);

// Generator with the configured architecture and the checkpoint's weights.
// Entries under `disc.` are ignored.
Generator<float> load_generator(const std::filesystem::path& ckpt, const ModelConfig& cfg);

/// Runs one subcommand (`train`, `infer`, `eval`, `curve`, `degrade`); args
/// exclude the program name. Errors are reported on `err` and mapped to the
/// exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mrdn
