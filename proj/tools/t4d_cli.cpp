#include <cstdio>
int main() { std::puts("t4d"); return 0; }
