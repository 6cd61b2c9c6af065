#ifndef MECAL_CLI_HPP
#define MECAL_CLI_HPP

#include "mecal/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mecal::cli {

/// Process exit codes. Each failure class has its own code so scripts can
/// tell a malformed input from a numerical failure.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kParse = 3,
    kNesting = 4,
    kDegenerate = 5,
    kBlocked = 6,
    kIo = 7,
    kInstability = 8,
    kDomain = 9,
    kConfig = 10,
    kInsufficient = 11,
    kMismatch = 12,
};

/// Bad flag value or flag combination.
class UsageError : public Error {
public:
    using Error::Error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
public:
    using Error::Error;
};

/// Re-run outputs or inputs differ from those recorded in the manifest.
class MismatchError : public Error {
public:
    using Error::Error;
};

/// Runs the `mecal` command line. `args[0]` is the program name. Errors are
/// reported on `err` and mapped to an ExitCode; nothing is thrown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Name of the run manifest written next to every command's outputs.
inline constexpr const char* kManifestName = "manifest.json";

} // namespace mecal::cli

#endif
