// Regenerates the golden cassette: record_golden <config> <out.jsonl>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fixtures.hpp"
#include "golden_recorder.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: record_golden <config> <out.jsonl>\n";
    return 2;
  }
  try {
    sysrev::testing::TempDir sessions;
    const auto jsonl = sysrev::testing::record_golden_cassette(argv[1], sessions.str());
    std::ofstream out(argv[2], std::ios::binary | std::ios::trunc);
    if (!out) {
      std::cerr << "cannot write " << argv[2] << "\n";
      return 1;
    }
    out << jsonl;
    std::cout << "wrote " << argv[2] << "\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
