"""
Independent, non-streaming rendition of the departure rule used to check the
streaming detector. It walks whole arrays, recomputes every window mean from
scratch and re-arms after each de-authentication.
"""

import math


def _count(seconds, f):
    return int(round(seconds * f, 9))


def batch_deauth_times(times, lux, f, delta, omega_s, eta_s, ell_s, floor_lux=0.0):
    omega_n = _count(omega_s, f)
    eta_n = _count(eta_s, f)
    fires = []
    i = 0
    n = len(lux)
    while i + omega_n <= n:
        # warm-up: the next omega_n readings fill the window
        window = list(lux[i:i + omega_n])
        raw = list(lux[i:i + omega_n])
        i += omega_n
        run = 0
        wave_start = None
        fired = False
        while i < n:
            value, t = lux[i], times[i]
            raw.append(value)
            mean = math.fsum(window) / len(window)
            limit = max(mean * delta / 100, floor_lux)
            if abs(mean - value) > limit:
                run += 1
                if wave_start is None:
                    wave_start = t
            else:
                run = 0
                window = window[1:] + [value]
            i += 1
            if wave_start is None:
                continue
            if run >= eta_n and t - wave_start <= ell_s:
                fires.append(t)
                fired = True
                break
            if t - wave_start > ell_s:
                window = raw[-omega_n:]
                run = 0
                wave_start = None
        if not fired:
            break
    return fires
