// Command line front end. Subcommands are filled in alongside the library
// modules they drive; this translation unit only wires argument parsing to
// library calls and maps error kinds to exit codes.
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::fprintf(stderr, "nemc: no subcommands wired yet\n");
    return 2;
}
