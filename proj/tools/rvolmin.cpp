#include "rvolmin/solver.hpp"
int main() { return 0; }
