"""Deployment recipe generation: container conversion and batch-job scripts."""

from .recipes import (FABRICS, MIXED_MPI_NODE_THRESHOLD, ContainerRecipe, Finding, LaunchRecipe, ParsedJobScript,
                      container_recipe_from_pairs, default_container_recipe, launch_recipe_from_pairs,
                      load_container_recipe, load_launch_recipe, make_launch_recipe, parse_job_script,
                      render_container_recipe, render_job_script, validate_recipe)
from .templates import DEFAULT_TEMPLATE, JobTemplate, available_templates, load_template

__all__ = [
    "DEFAULT_TEMPLATE", "FABRICS", "MIXED_MPI_NODE_THRESHOLD", "ContainerRecipe", "Finding", "JobTemplate",
    "LaunchRecipe", "ParsedJobScript", "available_templates", "container_recipe_from_pairs",
    "default_container_recipe", "launch_recipe_from_pairs", "load_container_recipe", "load_launch_recipe",
    "load_template", "make_launch_recipe", "parse_job_script", "render_container_recipe", "render_job_script",
    "validate_recipe",
]
