"""
URL configuration for flock_lab project.

Админка и read-only API реестра прогонов экспериментов.
"""
from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/', include('experiments.urls')),
]
