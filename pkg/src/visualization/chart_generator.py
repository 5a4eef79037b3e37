#!/usr/bin/env python3
"""
Chart Generator
Plotly figures for PD characteristics, phase trajectories, waveform dumps,
lock-in sweeps and SER curves, rendered to HTML or (with kaleido) to images.

Version: 1.0.0
"""

import math
from pathlib import Path
from typing import Optional, Union

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots
from loguru import logger

from ..core.config import settings
from ..detectors.characteristics import PdCurve


class ChartError(Exception):
    """Custom exception for figure rendering errors"""
    pass


class ChartGenerator:
    """Figure builder for the lab's CSV results"""

    def __init__(self):
        self.lab_colors = {
            'primary': '#0D1B2A',
            'secondary': '#00F5D4',
            'accent': '#FF9800',
            'neutral': '#A9A9A9',
        }
        self.variant_colors = {
            'classical': '#0D1B2A',
            'fourth_power': '#FF9800',
            'folding': '#00F5D4',
        }
        logger.info("Chart generator initialized")

    def _style(self, fig: go.Figure, title: str, x_title: str, y_title: str) -> go.Figure:
        fig.update_xaxes(title_text=x_title, title_font=dict(size=14, color=self.lab_colors['primary']),
                         showgrid=True, gridwidth=1, gridcolor='rgba(169, 169, 169, 0.3)')
        fig.update_yaxes(title_text=y_title, title_font=dict(size=14, color=self.lab_colors['primary']),
                         showgrid=True, gridwidth=1, gridcolor='rgba(169, 169, 169, 0.3)')
        fig.update_layout(
            title=title,
            font=dict(family="Roboto, sans-serif", size=12),
            title_font=dict(family="Poppins, sans-serif", size=18, color=self.lab_colors['primary']),
            plot_bgcolor='white',
            paper_bgcolor='white',
            height=450,
            hovermode='x unified',
            legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        )
        return fig

    def pd_curve_chart(self, curve: PdCurve, reference: Optional[PdCurve] = None) -> go.Figure:
        """Normalized characteristic over one period, with its reference shape when given"""
        fig = go.Figure()
        fig.add_trace(go.Scatter(
            x=curve.thetas, y=curve.normalized, mode='lines', name=curve.kind.value,
            line=dict(color=self.variant_colors.get(curve.kind.value, self.lab_colors['primary']), width=3),
        ))
        if reference is not None:
            fig.add_trace(go.Scatter(
                x=reference.thetas, y=reference.normalized, mode='lines', name=reference.kind.value,
                line=dict(color=self.lab_colors['neutral'], width=2, dash='dash'),
            ))
        return self._style(fig, f"Phase detector characteristic: {curve.kind.value}",
                           "Phase error (rad)", "Normalized output")

    def trajectory_chart(self, frame: pd.DataFrame, lock_point: Optional[float] = None,
                         title: str = "Phase error trajectory") -> go.Figure:
        """theta_e(t) and the loop control g(t) on a shared time axis"""
        fig = make_subplots(specs=[[{"secondary_y": True}]])
        fig.add_trace(go.Scatter(x=frame['t'], y=frame['theta_e'], mode='lines', name='theta_e',
                                 line=dict(color=self.lab_colors['primary'], width=2)), secondary_y=False)
        fig.add_trace(go.Scatter(x=frame['t'], y=frame['g'], mode='lines', name='g',
                                 line=dict(color=self.lab_colors['secondary'], width=2)), secondary_y=True)
        if lock_point is not None:
            fig.add_hline(y=lock_point, line_dash='dot', line_color=self.lab_colors['accent'])
        self._style(fig, title, "Time (s)", "Phase error (rad)")
        fig.update_yaxes(title_text="Control g", secondary_y=True, showgrid=False)
        return fig

    def waveform_chart(self, frame: pd.DataFrame, max_points: int = 20000) -> go.Figure:
        """Arm signals I, Q and control g of a waveform dump"""
        stride = max(1, math.ceil(len(frame) / max_points))
        view = frame.iloc[::stride]
        fig = go.Figure()
        for column, color in (('I', self.lab_colors['primary']), ('Q', self.lab_colors['accent']),
                              ('g', self.lab_colors['secondary'])):
            fig.add_trace(go.Scatter(x=view['t'], y=view[column], mode='lines', name=column,
                                     line=dict(color=color, width=1)))
        return self._style(fig, "Costas loop signals", "Time (s)", "Amplitude")

    def lockin_chart(self, frame: pd.DataFrame) -> go.Figure:
        """Closed-form and simulated lock-in versus K_vco, one pair of traces per detector"""
        fig = go.Figure()
        for (pd_kind, tau1, tau2), group in frame.groupby(['pd', 'tau1', 'tau2'], sort=False):
            group = group.sort_values('k_vco')
            color = self.variant_colors.get(pd_kind, self.lab_colors['neutral'])
            label = f"{pd_kind} (tau1={tau1:g}, tau2={tau2:g})"
            fig.add_trace(go.Scatter(x=group['k_vco'], y=group['omega_l_numeric'], mode='lines+markers',
                                     name=f"{label} numeric", line=dict(color=color, width=3)))
            if group['omega_l_formula'].notna().any():
                fig.add_trace(go.Scatter(x=group['k_vco'], y=group['omega_l_formula'], mode='lines+markers',
                                         name=f"{label} formula", line=dict(color=color, width=2, dash='dash')))
            if 'omega_l_exact' in group and group['omega_l_exact'].notna().any():
                fig.add_trace(go.Scatter(x=group['k_vco'], y=group['omega_l_exact'], mode='lines',
                                         name=f"{label} exact", line=dict(color=color, width=2, dash='dot')))
        self._style(fig, "Lock-in range", "K_vco", "omega_l (rad/s)")
        fig.update_xaxes(type='log')
        fig.update_yaxes(type='log')
        return fig

    def ser_chart(self, frame: pd.DataFrame) -> go.Figure:
        """SER versus SNR with Wilson 95% error bars; zero-error points are left off the log axis"""
        fig = go.Figure()
        for variant, group in frame.groupby('variant', sort=False):
            group = group[group['ser'] > 0].sort_values('snr_db')
            if group.empty:
                continue
            fig.add_trace(go.Scatter(
                x=group['snr_db'], y=group['ser'], mode='lines+markers', name=variant,
                line=dict(color=self.variant_colors.get(variant, self.lab_colors['neutral']), width=3),
                error_y=dict(type='data', symmetric=False,
                             array=group['ci_high'] - group['ser'], arrayminus=group['ser'] - group['ci_low']),
            ))
        self._style(fig, "Symbol error rate", "SNR (dB)", "SER")
        fig.update_yaxes(type='log')
        return fig

    def save(self, fig: go.Figure, path: Union[str, Path]) -> Path:
        """Write HTML, or an image through kaleido for the other formats"""
        path = Path(path)
        if path.suffix not in settings.plot_formats:
            raise ChartError(f"Unsupported plot format {path.suffix}; use one of {settings.plot_formats}")
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            if path.suffix == '.html':
                fig.write_html(str(path), include_plotlyjs='cdn')
            else:
                fig.write_image(str(path))
        except (ValueError, ImportError, OSError) as e:
            raise ChartError(f"Cannot render {path}: {e}") from e
        logger.info(f"Saved figure to {path}")
        return path


# Global chart generator instance
chart_generator = ChartGenerator()
