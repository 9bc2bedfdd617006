#pragma once

namespace promptsr::cli {

// prepare / train / infer / eval / analyze entry point; returns the process
// exit code and never throws
int run_cli(int argc, const char* const* argv);

}  // namespace promptsr::cli
