// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.

#include <cstdio>

#include "birl/verify.hpp"

int main() {
    const int failures = birl::run_checks({}, /*acceptance_only=*/true, /*jobs=*/2);
    if (failures != 0) {
        std::fprintf(stderr, "%d acceptance criteria failed\n", failures);
        return 1;
    }
    return 0;
}
