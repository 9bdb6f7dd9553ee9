// Acceptance suite entry point: runs every acceptance check against its
// oracle and prints one pass/fail line per criterion. Exit code 0 iff all
// checks pass.

#include <iostream>

#include "evkit/selftest.hpp"

int main() {
    try {
        const auto results = evkit::selftest::run_all(evkit::SparsityConfig::defaults());
        evkit::selftest::print_report(std::cout, results);
        return evkit::selftest::all_passed(results) ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance suite aborted: " << e.what() << "\n";
        return 2;
    }
}
