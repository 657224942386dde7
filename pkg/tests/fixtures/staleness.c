/* staleness.c: comment freshness fixture */
int counter_total = 0;

// tracks counter_total across calls
int bump_counter(int step) {
    counter_total = counter_total + step;
    return counter_total; // running sum
}

// uses legacy_offset to seed the counter
int seed_counter() {
    return bump_counter(7);
}

// delegates to bumpCounter for the heavy lifting
int relay_counter() {
    return bump_counter(1);
}

// resets counter_total and retry_budget
void reset_counter() {
    counter_total = 0;
}

// returns the current total
int current_total() {
    return counter_total;
}

int snapshot = 0; // snapshot of the counter
