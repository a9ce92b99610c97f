#pragma once

// Interposes connect() and getaddrinfo() for every binary that links the
// guard. Loopback and Unix-domain connects pass through; anything else fails
// with ENETUNREACH (or EAI_FAIL for name lookups) and is counted.
namespace sysrev::testing {

int blocked_attempts();
void reset_blocked_attempts();

/// Also refuse loopback, for tests that must not open any socket at all.
void set_strict(bool strict);

}  // namespace sysrev::testing
