/// Reservation-style token bucket over an abstract clock measured in
/// seconds. Callers reserve tokens at `now` and are told when the
/// reservation becomes usable; debt carries over to later callers.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    tokens: f64,
    last: f64,
}

impl TokenBucket {
    /// A bucket that starts full.
    pub fn new(rate: f64, burst: f64) -> Self {
        TokenBucket {
            rate,
            burst,
            tokens: burst,
            last: 0.0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Reserves `n` tokens at time `now` and returns the time at which they
    /// are available. Unlimited buckets always answer `now`.
    pub fn reserve(&mut self, now: f64, n: f64) -> f64 {
        if self.rate.is_infinite() {
            return now;
        }
        let now = now.max(self.last);
        self.tokens = (self.tokens + (now - self.last) * self.rate).min(self.burst);
        self.last = now;
        self.tokens -= n;
        if self.tokens >= 0.0 {
            now
        } else {
            now + (-self.tokens) / self.rate
        }
    }
}
