// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include <kvott/report.hpp>

int main() { return kvott::estimate_kv_bytes(1, 1, 1, 1, 1, 2) == 4 ? 0 : 1; }
