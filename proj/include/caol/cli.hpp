#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace caol::cli {

/// Runs one command. `args` excludes the program name. Diagnostics go to `err`,
/// progress lines to `out`. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace caol::cli
