def summarize_kpis(trace):
    return trace.kpis
