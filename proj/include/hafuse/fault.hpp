#pragma once

namespace hafuse::fault {

// Deliberate fault-injection points used to prove the gradient verifier can
// detect a planted bug. Faults are named in the HAFUSE_FAULT environment
// variable (comma-separated), read once per process. Production runs never
// set it.
bool enabled(const char* name);

} // namespace hafuse::fault
