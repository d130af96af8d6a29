//! Holds the `acceptance` test target, which prints one verdict line per
//! acceptance criterion and exits non-zero if any criterion fails. It lives
//! in its own package so that it runs after the other test targets.
