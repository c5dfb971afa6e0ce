// Fixture MCP server speaking line-delimited JSON-RPC on stdio.
//
//   mcpeval-fixture-server <fixture-name>

#include <iostream>

#include "mcpeval/error.hpp"
#include "mcpeval/fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: mcpeval-fixture-server <fixture>\nfixtures:";
    for (const auto& n : mcpeval::fixtures::server_fixture_names()) std::cerr << ' ' << n;
    std::cerr << '\n';
    return 2;
  }
  std::ios::sync_with_stdio(false);
  try {
    return mcpeval::fixtures::run_stdio_server(argv[1], std::cin, std::cout);
  } catch (const mcpeval::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
}
