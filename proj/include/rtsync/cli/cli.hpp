#pragma once

#include <atomic>
#include <ostream>
#include <string>
#include <vector>

namespace rtsync::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,   // unexpected local error (I/O, corrupt state)
    kDenied = 2,    // the server refused: bad token, rules, auth required
    kTransport = 3, // unreachable server, timeout, dropped connection
    kMalformed = 4, // bad arguments, paths or values
};

// Runs one command. `args` excludes the program name. Long-running commands
// (serve, agent, watch) return once `interrupt` is set.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>& interrupt);

} // namespace rtsync::cli
