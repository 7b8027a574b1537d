#ifndef PANE_CLI_HPP
#define PANE_CLI_HPP

#include <iosfwd>

namespace pane {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

/**
 * Entry point of the `pane` command line tool.
 *
 * Subcommands: explain, eval-remove, eval-minor, eval-logit, attack-guide,
 * selftest, info. The float mode comes from PANE_FLOAT_MODE (f32 or f64,
 * default f32). Files are written through a temporary and renamed, so a
 * failing command leaves no partial output.
 */
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pane

#endif  // PANE_CLI_HPP
