#include <cstdio>
int main() { std::puts("groupoid-tiler: subcommands pending"); return 0; }
